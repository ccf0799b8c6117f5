import init, { taper_curve, potential_trace, TwinRun } from "./pkg/enkf_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
}

// Draws each series in `series` ({ys, color, xs?}) on shared axes.
function plot(canvas, series, { ymin, ymax, xmax, xlabel, ylabel, dots } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  axes(ctx, w, h, pad);
  const all = series.flatMap((s) => Array.from(s.ys)).filter(Number.isFinite);
  const lo = ymin ?? Math.min(...all);
  const hi = ymax ?? Math.max(...all);
  const span = hi - lo || 1;
  const xm = xmax ?? Math.max(...series.map((s) => (s.xs ? s.xs[s.xs.length - 1] : s.ys.length - 1)), 1);
  const px = (x) => pad + (x / xm) * (w - 1.5 * pad);
  const py = (y) => h - pad - ((y - lo) / span) * (h - 1.5 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(3), 2, py(hi) + 4);
  ctx.fillText(lo.toPrecision(3), 2, py(lo));
  if (xlabel) ctx.fillText(xlabel, w - 8 * xlabel.length, h - 10);
  if (ylabel) ctx.fillText(ylabel, pad + 4, 12);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    s.ys.forEach((y, i) => {
      const x = s.xs ? s.xs[i] : i;
      if (i === 0) ctx.moveTo(px(x), py(y));
      else ctx.lineTo(px(x), py(y));
    });
    ctx.stroke();
    if (dots || s.dots) {
      s.ys.forEach((y, i) => ctx.fillRect(px(s.xs ? s.xs[i] : i) - 2, py(y) - 2, 4, 4));
    }
  }
}

function drawTaper() {
  const maxR = 20;
  const samples = 401;
  try {
    const ys = taper_curve($("taper-family").value, num("taper-r0"), $("taper-conv").value, maxR, samples);
    const xs = Array.from({ length: samples }, (_, i) => (maxR * i) / (samples - 1));
    plot($("taper-canvas"), [{ xs, ys, color: "#1f6feb" }], { ymin: 0, ymax: 1, xmax: maxR, xlabel: "distance", ylabel: "taper" });
  } catch (e) {
    console.warn(e);
  }
}

const POT_STEPS = [1, 2, 3, 4, 8, 64];
const POT_COLORS = ["#d73a49", "#e36209", "#b08800", "#1f6feb", "#6f42c1", "#22863a"];

function drawPotential() {
  const series = [];
  for (const [i, steps] of POT_STEPS.entries()) {
    try {
      const trace = potential_trace($("pot-filter").value, steps, num("pot-delta"), num("pot-r0"), BigInt(num("pot-seed")), 30);
      const v0 = trace[0];
      const ys = Array.from(trace, (v) => v / v0);
      const xs = ys.map((_, l) => l / steps);
      series.push({ xs, ys, color: POT_COLORS[i], dots: steps <= 8 });
    } catch (e) {
      console.warn(`L=${steps}:`, e);
    }
  }
  plot($("pot-canvas"), series, { ymin: 0, xmax: 1, xlabel: "pseudo-time s", ylabel: "V / V(0)" });
  const ctx = $("pot-canvas").getContext("2d");
  POT_STEPS.forEach((l, i) => {
    ctx.fillStyle = POT_COLORS[i];
    ctx.fillText(`L=${l}`, 860, 20 + 14 * i);
  });
}

let run = null;
let timer = null;

function drawTwin() {
  const truth = run.truth();
  const mean = run.mean();
  const m = run.member_count();
  const members = run.members();
  const n = truth.length;
  const series = [];
  for (let i = 0; i < m; i++) {
    series.push({ ys: members.slice(i * n, (i + 1) * n), color: "rgba(31,111,235,0.15)", width: 1 });
  }
  series.push({ ys: truth, color: "#111", width: 2 });
  series.push({ ys: mean, color: "#d73a49", width: 2 });
  plot($("twin-state"), series, { ymin: -12, ymax: 16, xlabel: "grid index", ylabel: "state (black truth, red mean)" });

  const an = run.analysis_rmse();
  const fc = run.forecast_rmse();
  plot(
    $("twin-rmse"),
    [
      { ys: fc, color: "#999", width: 1 },
      { ys: an, color: "#1f6feb", width: 1 },
    ],
    { ymin: 0, ymax: 3, xlabel: "cycle", ylabel: "RMSE (grey forecast, blue analysis)" },
  );
  const recent = an.slice(-200);
  const avg = recent.reduce((a, b) => a + b, 0) / Math.max(recent.length, 1);
  const failure = run.failure();
  $("twin-status").textContent =
    `cycle ${run.cycles()}  mean analysis RMSE (last ${recent.length}) ${avg.toFixed(3)}` + (failure ? `  stopped: ${failure}` : "");
}

function stopTwin() {
  if (timer !== null) cancelAnimationFrame(timer);
  timer = null;
}

function startTwin() {
  stopTwin();
  try {
    run = new TwinRun($("twin-filter").value, num("twin-delta"), num("twin-r0"), BigInt(num("twin-seed")));
  } catch (e) {
    $("twin-status").textContent = String(e);
    return;
  }
  const tick = () => {
    run.advance(5);
    drawTwin();
    timer = run.failure() ? null : requestAnimationFrame(tick);
  };
  tick();
}

await init();
for (const id of ["taper-family", "taper-r0", "taper-conv"]) $(id).addEventListener("input", drawTaper);
$("pot-run").addEventListener("click", drawPotential);
$("twin-start").addEventListener("click", startTwin);
$("twin-stop").addEventListener("click", stopTwin);
drawTaper();
drawPotential();
