import init, { lambda_sweep, cosine_vs_samples, aimle_trajectory } from "./pkg/aimle_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function values(section) {
  const out = {};
  for (const input of section.querySelectorAll("input")) {
    out[input.name] = input.type === "number" ? Number(input.value) : input.value;
  }
  return out;
}

// Minimal line chart: series = [{ name, xs, ys, color, dashed }].
function plot(canvas, series, { xlog = false, ylabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = { l: 50, r: 170, t: 12, b: 30 };
  ctx.clearRect(0, 0, w, h);
  const tx = (x) => (xlog ? Math.log10(x) : x);
  const xs = series.flatMap((s) => s.xs.map(tx));
  const ys = series.flatMap((s) => s.ys).filter(Number.isFinite);
  if (!xs.length || !ys.length) return;
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(0, ...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const px = (x) => pad.l + ((tx(x) - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const py = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, h - pad.b);
  ctx.lineTo(w - pad.r, h - pad.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toFixed(2), 4, py(y) + 4);
    const xv = x0 + ((x1 - x0) * i) / 4;
    const label = xlog ? `1e${xv.toFixed(1)}` : xv.toFixed(2);
    ctx.fillText(label, pad.l + ((xv - x0) / (x1 - x0)) * (w - pad.l - pad.r) - 10, h - 10);
  }
  if (ylabel) ctx.fillText(ylabel, pad.l + 4, pad.t + 10);

  series.forEach((s, i) => {
    ctx.strokeStyle = s.color || COLORS[i % COLORS.length];
    ctx.setLineDash(s.dashed ? [6, 4] : []);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.xs.forEach((x, j) => {
      const p = [px(x), py(s.ys[j])];
      j ? ctx.lineTo(...p) : ctx.moveTo(...p);
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillRect(w - pad.r + 10, pad.t + 16 * i, 12, 3);
    ctx.fillText(s.name, w - pad.r + 28, pad.t + 16 * i + 5);
  });
}

function wire(id, run) {
  const section = document.getElementById(id);
  const status = section.querySelector(".status");
  section.querySelector("button").addEventListener("click", () => {
    status.textContent = "running…";
    status.className = "status";
    // Let the status paint before the synchronous wasm call blocks the page.
    setTimeout(() => {
      const t0 = performance.now();
      try {
        run(values(section), section.querySelector("canvas"));
        status.textContent = `${((performance.now() - t0) / 1000).toFixed(2)} s`;
      } catch (e) {
        status.textContent = String(e);
        status.className = "status error";
      }
    }, 20);
  });
}

wire("sweep", (v, canvas) => {
  const rows = JSON.parse(
    lambda_sweep(v.n, v.samples, v.seeds, v.lambda_max, v.points, v.warmup, BigInt(v.seed)),
  );
  const grid = rows.filter((r) => r.label !== "adaptive");
  const adaptive = rows.find((r) => r.label === "adaptive");
  const xs = grid.map((r) => r.x);
  const flat = (y) => [xs[0], xs[xs.length - 1]].map(() => y);
  plot(canvas, [
    { name: "IMLE cosine", xs, ys: grid.map((r) => r.cosine) },
    { name: "IMLE zero fraction", xs, ys: grid.map((r) => r.zero_fraction) },
    { name: "AIMLE cosine", xs: [xs[0], xs[xs.length - 1]], ys: flat(adaptive.cosine), dashed: true },
  ], { ylabel: "vs λ" });
});

wire("cosine", (v, canvas) => {
  const series = JSON.parse(cosine_vs_samples(v.n, v.estimators, v.max_exponent, v.seeds, BigInt(v.seed)));
  plot(
    canvas,
    series.map((s) => ({ name: s.estimator, xs: s.points.map((p) => p.x), ys: s.points.map((p) => p.cosine) })),
    { xlog: true, ylabel: "cosine" },
  );
});

wire("trajectory", (v, canvas) => {
  const pts = JSON.parse(aimle_trajectory(v.n, v.samples, v.steps, v.eta, v.lr, BigInt(v.seed)));
  const xs = pts.map((p) => p.step);
  const first = pts[0].loss || 1;
  plot(canvas, [
    { name: "loss / loss₀", xs, ys: pts.map((p) => p.loss / first) },
    { name: "λ", xs, ys: pts.map((p) => p.lambda) },
    { name: "ḡ", xs, ys: pts.map((p) => p.g_bar) },
    { name: "α", xs, ys: pts.map((p) => p.alpha) },
  ], { ylabel: "per step" });
});

await init();
