import init, { city, blendDistributions, explain } from "./pkg/navxai_wasm.js";

const $ = (id) => document.getElementById(id);
const NS = "http://www.w3.org/2000/svg";

function svgEl(name, attrs) {
  const e = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  return e;
}

function fail(target, e) {
  target.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(e.message ?? e);
  target.append(p);
}

function drawCity() {
  const svg = $("city-svg");
  svg.innerHTML = "";
  let v;
  try {
    v = JSON.parse(city(Number($("city-seed").value)));
  } catch (e) {
    fail($("city-info"), e);
    return;
  }
  const t = v.task;
  const cell = 320 / Math.max(t.grid_width - 1, t.grid_height - 1);
  const at = (p) => [20 + p.col * cell, 20 + p.row * cell];
  const key = (a, b) => `${a.row},${a.col}-${b.row},${b.col}`;
  const blocked = new Set(t.roadblocks.map(([a, b]) => key(a, b)));
  for (let r = 0; r < t.grid_height; r++) {
    for (let c = 0; c < t.grid_width; c++) {
      for (const q of [{ row: r, col: c + 1 }, { row: r + 1, col: c }]) {
        if (q.row >= t.grid_height || q.col >= t.grid_width) continue;
        const p = { row: r, col: c };
        const [x1, y1] = at(p);
        const [x2, y2] = at(q);
        const bad = blocked.has(key(p, q));
        svg.append(svgEl("line", { x1, y1, x2, y2, stroke: bad ? "#d33" : "#bbb", "stroke-width": bad ? 3 : 2, "stroke-dasharray": bad ? "4 3" : "" }));
      }
    }
  }
  const pts = v.route.map((p) => at(p).join(",")).join(" ");
  svg.append(svgEl("polyline", { points: pts, fill: "none", stroke: "#2a6", "stroke-width": 5, "stroke-opacity": 0.7 }));
  const [sx, sy] = at(t.start);
  const [gx, gy] = at(t.goal);
  svg.append(svgEl("circle", { cx: sx, cy: sy, r: 8, fill: "#06c" }));
  svg.append(svgEl("rect", { x: gx - 8, y: gy - 8, width: 16, height: 16, fill: "#c60" }));
  $("city-info").textContent = `${t.task_id}: start heading ${t.start_heading}, ${t.optimal_length} moves (${v.moves.join(", ")})`;
}

function row(name, values, bars) {
  const tr = document.createElement("tr");
  const th = document.createElement("th");
  th.textContent = name;
  tr.append(th);
  for (const x of values) {
    const td = document.createElement("td");
    td.textContent = x.toFixed(4) + " ";
    if (bars) {
      const b = document.createElement("span");
      b.className = "bar";
      b.style.width = `${Math.round(x * 120)}px`;
      td.append(b);
    }
    tr.append(td);
  }
  return tr;
}

function drawBlend() {
  const inputs = [...$("blend-inputs").querySelectorAll("input")].map((i) => Math.max(0, Math.floor(Number(i.value) || 0)));
  const part = (k) => Uint32Array.from(inputs.slice(3 * k, 3 * k + 3));
  const lambda = Number($("blend-lambda").value);
  $("blend-lambda-val").textContent = ` ${lambda.toFixed(2)}`;
  const out = $("blend-out");
  try {
    const v = JSON.parse(blendDistributions(part(0), part(1), part(2), part(3), lambda));
    out.innerHTML = "<tr><th></th><th>language</th><th>feature map</th><th>decision tree</th></tr>";
    out.append(row("preference", v.d_p, false), row("performance", v.d_t, false), row("blend", v.d_b, true));
  } catch (e) {
    fail(out, e);
  }
}

function treeList(node) {
  const li = document.createElement("li");
  const span = document.createElement("span");
  if (node.highlighted) span.className = "hl";
  span.textContent = node.kind === "Leaf" ? `go ${node.action}` : node.predicate_label;
  li.append(span);
  if (node.kind !== "Leaf") {
    const ul = document.createElement("ul");
    for (const [tag, child] of [["yes", node.if_true], ["no", node.if_false]]) {
      const item = treeList(child);
      item.prepend(`${tag}: `);
      ul.append(item);
    }
    li.append(ul);
  }
  return li;
}

function featureMap(payload) {
  const svg = svgEl("svg", { width: 400, height: 240, viewBox: "0 0 100 60" });
  svg.append(svgEl("rect", { x: 0, y: 0, width: 100, height: 60, fill: "#333" }));
  const fills = { Red: "#e33", Green: "#3c3", Neutral: "#fff" };
  for (const r of payload.regions) {
    const shade = r.color === "Neutral" ? r.brightness : 0.4 + 0.6 * r.brightness;
    svg.append(svgEl("polygon", {
      points: r.polygon.map((p) => p.join(",")).join(" "),
      fill: fills[r.color] ?? "#fff",
      "fill-opacity": shade.toFixed(3),
    }));
  }
  return svg;
}

function drawExplanation() {
  const out = $("ex-out");
  let v;
  try {
    v = JSON.parse(explain(Number($("ex-seed").value), Number($("ex-step").value), $("ex-mod").value, $("ex-correct").checked));
  } catch (e) {
    fail(out, e);
    return;
  }
  out.innerHTML = "";
  const head = document.createElement("p");
  const masked = v.masked_direction ? `, ${v.masked_direction} hidden` : "";
  head.textContent = `at row ${v.pos.row} col ${v.pos.col} heading ${v.heading}: suggest ${v.direction}${masked} | correct ${v.is_correct} | malfunction signal ${v.red_herring}`;
  out.append(head);
  const { modality, payload } = v.explanation;
  if (modality === "Language") {
    const q = document.createElement("blockquote");
    q.textContent = payload.text;
    out.append(q);
  } else if (modality === "FeatureMap") {
    out.append(featureMap(payload));
  } else {
    const ul = document.createElement("ul");
    ul.className = "tree";
    ul.append(treeList(payload.root));
    const wrap = document.createElement("div");
    wrap.className = "tree";
    wrap.append(ul);
    out.append(wrap);
  }
}

await init();
$("city-go").addEventListener("click", drawCity);
$("blend-inputs").addEventListener("input", drawBlend);
$("blend-lambda").addEventListener("input", drawBlend);
$("ex-go").addEventListener("click", drawExplanation);
drawCity();
drawBlend();
drawExplanation();
