import init, { syntheticImage, ScoreExplorer, plantedPoints, clusterPoints } from "./pkg/spoofprompt_web.js";

const $ = (id) => document.getElementById(id);
const showError = (e) => { $("error").textContent = e ? String(e.message ?? e) : ""; };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"];

// Synthetic faces: rendered at 32x32 and scaled up without smoothing.
const SIZE = 32;
function drawFace() {
  const alpha = Number($("alpha").value);
  $("alpha-out").textContent = alpha.toFixed(2);
  try {
    const px = syntheticImage($("family").value, alpha, Number($("face-seed").value), SIZE);
    const small = new OffscreenCanvas(SIZE, SIZE);
    small.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(px), SIZE, SIZE), 0, 0);
    const ctx = $("face").getContext("2d");
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(small, 0, 0, $("face").width, $("face").height);
    showError(null);
  } catch (e) { showError(e); }
}

// ROC explorer.
let explorer = null;
function setExplorer(ex) {
  if (explorer) explorer.free();
  explorer = ex;
  drawRoc();
}

function drawRoc() {
  if (!explorer) return;
  const thr = Number($("thr").value);
  $("thr-out").textContent = thr.toFixed(3);
  const c = $("roc"), ctx = c.getContext("2d"), w = c.width, h = c.height;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath(); ctx.moveTo(0, h); ctx.lineTo(w, 0); ctx.stroke();
  // axes: APCER right, BPCER up
  const roc = explorer.roc();
  ctx.strokeStyle = "#1f77b4"; ctx.lineWidth = 2; ctx.beginPath();
  for (let i = 0; i < roc.length; i += 2) {
    const x = roc[i] * w, y = h - roc[i + 1] * h;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke(); ctx.lineWidth = 1;
  const [acc, apcer, bpcer, acer] = explorer.at(thr);
  ctx.fillStyle = "#d62728";
  ctx.beginPath(); ctx.arc(apcer * w, h - bpcer * h, 5, 0, 2 * Math.PI); ctx.fill();
  ctx.fillStyle = "#444"; ctx.fillText("APCER →", w - 52, h - 4); ctx.fillText("↑ BPCER", 4, 12);

  drawHist(thr);
  $("rates").textContent =
    `AUC    ${explorer.auc().toFixed(4)}\nEER    ${explorer.eer().toFixed(4)} @ ${explorer.eerThreshold().toFixed(3)}\n` +
    `ACC    ${acc.toFixed(4)}\nAPCER  ${apcer.toFixed(4)}\nBPCER  ${bpcer.toFixed(4)}\nACER   ${acer.toFixed(4)}`;
}

function drawHist(thr) {
  const c = $("hist"), ctx = c.getContext("2d"), w = c.width, h = c.height;
  const bins = 40, counts = [new Array(bins).fill(0), new Array(bins).fill(0)];
  const pts = explorer.points();
  for (let i = 0; i < pts.length; i += 2) {
    counts[pts[i + 1]][Math.min(bins - 1, Math.floor(pts[i] * bins))] += 1;
  }
  const top = Math.max(1, ...counts[0], ...counts[1]);
  ctx.clearRect(0, 0, w, h);
  ctx.globalAlpha = 0.6;
  [["#d62728", counts[0]], ["#2ca02c", counts[1]]].forEach(([color, cs]) => {
    ctx.fillStyle = color;
    cs.forEach((n, b) => ctx.fillRect((b * w) / bins, h - (n / top) * (h - 20), w / bins - 1, (n / top) * (h - 20)));
  });
  ctx.globalAlpha = 1;
  ctx.strokeStyle = "#000"; ctx.beginPath(); ctx.moveTo(thr * w, 0); ctx.lineTo(thr * w, h); ctx.stroke();
  ctx.fillStyle = "#444"; ctx.fillText("attack", 4, 12); ctx.fillText("bona fide", w - 60, 12);
}

function syntheticScores() {
  const sep = Number($("sep").value);
  $("sep-out").textContent = sep.toFixed(1);
  try { setExplorer(new ScoreExplorer(sep, 300, 300, 7)); showError(null); } catch (e) { showError(e); }
}

// K-Means.
let points = [];
function regenerate() {
  const spread = Number($("spread").value);
  $("spread-out").textContent = spread.toFixed(2);
  points = plantedPoints(Number($("planted").value), 60, spread, Math.floor(Math.random() * 2 ** 31));
  cluster();
}

function cluster() {
  const c = $("km"), ctx = c.getContext("2d"), w = c.width, h = c.height;
  const sx = (x) => ((x + 1.8) / 3.6) * w, sy = (y) => h - ((y + 1.8) / 3.6) * h;
  try {
    const r = clusterPoints(points, Number($("k").value), 0);
    const assign = r.assignment(), centers = r.centers(), hist = r.inertiaHistory();
    ctx.clearRect(0, 0, w, h);
    for (let i = 0; i < assign.length; i++) {
      ctx.fillStyle = PALETTE[assign[i] % PALETTE.length];
      ctx.fillRect(sx(points[2 * i]) - 2, sy(points[2 * i + 1]) - 2, 4, 4);
    }
    ctx.strokeStyle = "#000"; ctx.lineWidth = 2;
    for (let j = 0; j < centers.length; j += 2) {
      const x = sx(centers[j]), y = sy(centers[j + 1]);
      ctx.beginPath(); ctx.moveTo(x - 7, y - 7); ctx.lineTo(x + 7, y + 7); ctx.moveTo(x + 7, y - 7); ctx.lineTo(x - 7, y + 7); ctx.stroke();
    }
    ctx.lineWidth = 1;
    $("km-info").textContent = `iterations ${hist.length}\ninertia    ${hist[hist.length - 1].toFixed(4)}`;
    r.free();
    showError(null);
  } catch (e) { showError(e); }
}

await init();
["family", "alpha", "face-seed"].forEach((id) => $(id).addEventListener("input", drawFace));
$("sep").addEventListener("input", syntheticScores);
$("thr").addEventListener("input", drawRoc);
$("to-eer").addEventListener("click", () => { if (explorer) { $("thr").value = explorer.eerThreshold(); drawRoc(); } });
$("csv").addEventListener("change", async (ev) => {
  const file = ev.target.files[0];
  if (!file) return;
  try { setExplorer(ScoreExplorer.fromCsv(await file.text())); showError(null); } catch (e) { showError(e); }
});
$("regen").addEventListener("click", regenerate);
$("spread").addEventListener("input", regenerate);
$("planted").addEventListener("change", regenerate);
$("k").addEventListener("change", cluster);
drawFace();
syntheticScores();
regenerate();
