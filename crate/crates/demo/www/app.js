// Glue between the controls, the wasm module, and the two canvases.
// Build the module first:  wasm-pack build crates/demo --target web --out-dir www/pkg

import init, { simulate_scene, evaluate_scene, sweep_tracklet_length } from "./pkg/trackvote_demo.js";

const $ = (id) => document.getElementById(id);
const sliders = ["accuracy", "tracks", "frames", "dropout", "jitter", "maxlen", "stride", "theta"];

let scene = null;
let frameIndex = 0;
let playing = false;
let timer = null;

function classColor(c, n) {
  return `hsl(${Math.round((360 * c) / Math.max(n, 1))} 70% 58%)`;
}

function config() {
  return JSON.stringify({
    sim: {
      num_classes: 7,
      num_tracks: Number($("tracks").value),
      frames: Number($("frames").value),
      per_frame_top1_accuracy: Number($("accuracy").value),
      detection_dropout: Number($("dropout").value),
      jitter_sigma: Number($("jitter").value),
      seed: Number($("seed").value),
    },
    params: {
      max_len: Number($("maxlen").value),
      stride: Number($("stride").value),
      theta: Number($("theta").value),
    },
  });
}

function drawFrame() {
  if (!scene) return;
  const canvas = $("scene");
  const ctx = canvas.getContext("2d");
  const sx = canvas.width / scene.image_w;
  const sy = canvas.height / scene.image_h;
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  const frame = scene.frames[frameIndex];
  $("frame-label").textContent = `frame ${frame.frame}`;
  $("scrub").value = frameIndex;

  ctx.lineWidth = 1;
  for (const a of frame.annotations) {
    ctx.strokeStyle = "rgba(255,255,255,0.25)";
    ctx.strokeRect(a.x * sx, a.y * sy, a.w * sx, a.h * sy);
  }

  const key = $("labeling").value;
  for (const d of frame.detections) {
    const voted = d[key];
    const color = classColor(voted, scene.num_classes);
    ctx.fillStyle = color.replace("58%)", "58% / 0.45)");
    ctx.fillRect(d.x * sx, d.y * sy, d.w * sx, d.h * sy);
    const wrong = d.true_class !== null && voted !== d.true_class;
    ctx.strokeStyle = wrong ? "#ff4d4d" : color;
    ctx.lineWidth = wrong ? 2.5 : 1.5;
    ctx.strokeRect(d.x * sx, d.y * sy, d.w * sx, d.h * sy);
    ctx.fillStyle = "rgba(232,232,228,0.8)";
    ctx.font = "10px system-ui";
    ctx.fillText(`t${d.tracklet}`, d.x * sx + 2, d.y * sy + 10);
  }
}

function setPlaying(on) {
  playing = on;
  $("play").textContent = on ? "Pause" : "Play";
  clearInterval(timer);
  if (on) {
    timer = setInterval(() => {
      frameIndex = (frameIndex + 1) % scene.frames.length;
      drawFrame();
    }, 90);
  }
}

function pct(x, std) {
  const p = (100 * x).toFixed(1);
  return std === undefined ? `${p}` : `${p} (± ${(100 * std).toFixed(1)})`;
}

function renderMetrics(cmp) {
  const rows = [
    ["single", cmp.single],
    ["average", cmp.average],
    ["maximum", cmp.maximum],
  ];
  const body = $("metrics").querySelector("tbody");
  body.innerHTML = "";
  for (const [name, r] of rows) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td>${name}</td><td>${pct(r.map, r.map_std)}</td>` +
      `<td>${pct(r.precision_macro, r.precision_std)}</td>` +
      `<td>${pct(r.recall_macro, r.recall_std)}</td>`;
    body.appendChild(tr);
  }
}

function renderSweep(sweep) {
  const canvas = $("sweep");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pad = { l: 56, r: 16, t: 14, b: 30 };
  const w = canvas.width - pad.l - pad.r;
  const h = canvas.height - pad.t - pad.b;
  const values = [...sweep.average, ...sweep.maximum, sweep.single];
  const lo = Math.max(0, Math.min(...values) - 0.02);
  const hi = Math.min(1.001, Math.max(...values) + 0.01);
  const xAt = (i) => pad.l + (w * i) / (sweep.lengths.length - 1 || 1);
  const yAt = (v) => pad.t + h * (1 - (v - lo) / (hi - lo));

  ctx.strokeStyle = "#2c313b";
  ctx.fillStyle = "#9aa0a6";
  ctx.font = "11px system-ui";
  for (let g = 0; g <= 4; g++) {
    const v = lo + ((hi - lo) * g) / 4;
    ctx.beginPath();
    ctx.moveTo(pad.l, yAt(v));
    ctx.lineTo(canvas.width - pad.r, yAt(v));
    ctx.stroke();
    ctx.fillText((100 * v).toFixed(1), 8, yAt(v) + 4);
  }
  sweep.lengths.forEach((len, i) => ctx.fillText(String(len), xAt(i) - 3, canvas.height - 8));

  ctx.setLineDash([6, 4]);
  ctx.strokeStyle = "#9aa0a6";
  ctx.beginPath();
  ctx.moveTo(pad.l, yAt(sweep.single));
  ctx.lineTo(canvas.width - pad.r, yAt(sweep.single));
  ctx.stroke();
  ctx.setLineDash([]);

  const series = [
    ["average", sweep.average, "#57b3ff"],
    ["maximum", sweep.maximum, "#ffb357"],
  ];
  for (const [name, data, color] of series) {
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    data.forEach((v, i) => (i === 0 ? ctx.moveTo(xAt(i), yAt(v)) : ctx.lineTo(xAt(i), yAt(v))));
    ctx.stroke();
    data.forEach((v, i) => {
      ctx.beginPath();
      ctx.arc(xAt(i), yAt(v), 3, 0, 2 * Math.PI);
      ctx.fill();
    });
    ctx.fillText(name, xAt(data.length - 1) - 50, yAt(data[data.length - 1]) - 8);
  }
}

async function regenerate() {
  const status = $("status");
  status.textContent = "generating…";
  try {
    const cfg = config();
    scene = JSON.parse(simulate_scene(cfg));
    frameIndex = 0;
    $("scrub").max = scene.frames.length - 1;
    drawFrame();
    renderMetrics(JSON.parse(evaluate_scene(cfg)));
    renderSweep(JSON.parse(sweep_tracklet_length(cfg, 10)));
    status.textContent = `${scene.tracklet_count} tracklets over ${scene.frames.length} frames`;
  } catch (e) {
    status.textContent = `error: ${e}`;
  }
}

function wireControls() {
  for (const id of sliders) {
    const el = $(id);
    const out = $(`${id}-out`);
    const sync = () => {
      if (out) out.textContent = Number(el.value).toFixed(el.step.includes(".") ? 2 : 0);
    };
    el.addEventListener("input", sync);
    sync();
  }
  $("run").addEventListener("click", regenerate);
  $("labeling").addEventListener("change", drawFrame);
  $("play").addEventListener("click", () => setPlaying(!playing));
  $("scrub").addEventListener("input", () => {
    frameIndex = Number($("scrub").value);
    setPlaying(false);
    drawFrame();
  });
}

await init();
wireControls();
await regenerate();
