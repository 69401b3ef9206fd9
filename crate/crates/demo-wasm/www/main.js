import init, {
  brightfield_scene, detect_droplets, shape_metrics,
  fluorescence_scene, transfer_channels, live_dead,
} from "./pkg/icell_demo_wasm.js";

const W = 480, H = 360;
const $ = (id) => document.getElementById(id);
const status = $("status");

function show(canvas, rgba) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), W, H), 0, 0);
  return ctx;
}

function pixels(canvas) {
  return new Uint8Array(canvas.getContext("2d").getImageData(0, 0, W, H).data.buffer);
}

function table(el, head, rows) {
  el.innerHTML = "<tr>" + head.map((h) => `<th>${h}</th>`).join("") + "</tr>" +
    rows.map((r) => "<tr>" + r.map((v) => `<td>${v}</td>`).join("") + "</tr>").join("");
}

function guard(f) {
  return (...args) => {
    try {
      f(...args);
      status.textContent = "ready";
      status.className = "";
    } catch (e) {
      status.textContent = String(e.message ?? e);
      status.className = "err";
    }
  };
}

// droplets

const runDroplets = guard(() => {
  const seed = Number($("bf-seed").value), count = Number($("bf-count").value);
  const noise = Number($("bf-noise").value);
  $("bf-count-v").textContent = count;
  $("bf-noise-v").textContent = noise;
  const canvas = $("bf");
  const rgba = brightfield_scene(seed, count, noise);
  const ctx = show(canvas, rgba);
  const t0 = performance.now();
  const out = detect_droplets(rgba, W, H);
  const ms = performance.now() - t0;
  const rows = [];
  ctx.lineWidth = 2;
  ctx.font = "13px sans-serif";
  for (let i = 0; i < out.length; i += 4) {
    const [cx, cy, d, circ] = out.subarray(i, i + 4);
    const n = i / 4 + 1;
    ctx.strokeStyle = "#e0218a";
    ctx.beginPath();
    ctx.arc(cx, cy, d / 2, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = "#e0218a";
    ctx.fillText(n, cx - 4, cy + 4);
    rows.push([n, cx.toFixed(1), cy.toFixed(1), d.toFixed(1), circ.toFixed(3)]);
  }
  table($("bf-table"), ["#", "x", "y", "diameter px", "circularity"], rows);
  status.textContent = `${rows.length} droplets in ${ms.toFixed(0)} ms`;
});

// painting

const paint = $("paint");
const pctx = paint.getContext("2d");
let drawing = false;

function measure() {
  const rgba = pctx.getImageData(0, 0, W, H).data;
  const mask = new Uint8Array(W * H);
  for (let i = 0; i < mask.length; i++) mask[i] = rgba[4 * i + 3] > 127 ? 1 : 0;
  const out = shape_metrics(mask, W, H);
  const rows = [];
  for (let i = 0; i < out.length; i += 5) {
    const [cx, cy, area, perim, circ] = out.subarray(i, i + 5);
    rows.push([i / 5 + 1, cx.toFixed(0), cy.toFixed(0), area.toFixed(0), perim.toFixed(1), circ.toFixed(3)]);
  }
  table($("paint-table"), ["#", "x", "y", "area", "perimeter", "circularity"], rows);
}

function dab(e) {
  const r = paint.getBoundingClientRect();
  pctx.fillStyle = "#246";
  pctx.beginPath();
  pctx.arc(e.clientX - r.left, e.clientY - r.top, Number($("brush").value), 0, 2 * Math.PI);
  pctx.fill();
}

paint.addEventListener("pointerdown", (e) => { drawing = true; dab(e); });
paint.addEventListener("pointermove", (e) => { if (drawing) dab(e); });
window.addEventListener("pointerup", () => { if (drawing) { drawing = false; guard(measure)(); } });
$("paint-clear").addEventListener("click", () => { pctx.clearRect(0, 0, W, H); guard(measure)(); });

// fluorescence

function score(rgba) {
  const ctx = show($("fl"), rgba);
  const out = live_dead(rgba, W, H);
  const [live, dead, amb, ratio] = out.subarray(0, 4);
  const colors = ["#7f7", "#f77", "#ff7"];
  ctx.lineWidth = 1.5;
  for (let i = 4; i < out.length; i += 4) {
    const [cx, cy, circ, cls] = out.subarray(i, i + 4);
    ctx.strokeStyle = colors[cls];
    ctx.strokeRect(cx - 28, cy - 28, 56, 56);
    ctx.fillStyle = colors[cls];
    ctx.font = "11px sans-serif";
    ctx.fillText(circ.toFixed(2), cx - 12, cy + 40);
  }
  $("fl-summary").innerHTML =
    `<p>live ${live} &middot; dead ${dead} &middot; ambiguous ${amb}</p>` +
    `<p>field ratio G/(G+R) = ${Number.isNaN(ratio) ? "n/a" : ratio.toFixed(3)}</p>`;
}

let field = null;

const runField = guard(() => {
  field = fluorescence_scene(Number($("fl-seed").value), Number($("fl-live").value), Number($("fl-dead").value));
  score(field);
});

const runTransfer = guard(() => {
  if (!field) runField();
  field = transfer_channels(field, W, H, $("fl-map").value);
  score(field);
});

await init();
status.textContent = "ready";
$("bf-run").addEventListener("click", runDroplets);
for (const id of ["bf-count", "bf-noise", "bf-seed"]) $(id).addEventListener("input", runDroplets);
$("fl-run").addEventListener("click", runField);
$("fl-transfer").addEventListener("click", runTransfer);
runDroplets();
runField();
measure();
