import init, { bias_grid, prediction_slice, jackknife_oracle } from './pkg/ijforest_wasm.js';

const $ = (id) => document.getElementById(id);

function values(form) {
  const out = {};
  for (const [k, v] of new FormData(form)) out[k] = v;
  return out;
}

// Runs `work` after the browser has painted the "running" message.
function run(info, work) {
  info.classList.remove('error');
  info.textContent = 'running...';
  setTimeout(() => {
    const t0 = performance.now();
    try {
      work();
      info.textContent += `  (${((performance.now() - t0) / 1000).toFixed(2)} s)`;
    } catch (e) {
      info.classList.add('error');
      info.textContent = String(e.message ?? e);
    }
  }, 20);
}

function drawSlice(canvas, res) {
  const ctx = canvas.getContext('2d');
  const { width: w, height: h } = canvas;
  const pad = 36;
  const rows = res.rows;
  const ys = rows.flatMap((r) => [r.lower, r.upper, r.truth]);
  let lo = Math.min(...ys), hi = Math.max(...ys);
  const span = hi - lo || 1;
  lo -= 0.05 * span;
  hi += 0.05 * span;
  const sx = (x) => pad + x * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - 2 * pad);

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = '#999';
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = '#444';
  ctx.font = '11px sans-serif';
  ctx.fillText(hi.toFixed(2), 2, pad + 4);
  ctx.fillText(lo.toFixed(2), 2, h - pad);
  ctx.fillText('x₁ = 0', pad, h - pad + 14);
  ctx.fillText('1', w - pad - 4, h - pad + 14);

  ctx.fillStyle = 'rgba(40, 110, 200, 0.22)';
  ctx.beginPath();
  rows.forEach((r, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, sx(r.x1), sy(r.upper)));
  [...rows].reverse().forEach((r) => ctx.lineTo(sx(r.x1), sy(r.lower)));
  ctx.closePath();
  ctx.fill();

  const line = (key, color, dash) => {
    ctx.strokeStyle = color;
    ctx.setLineDash(dash);
    ctx.lineWidth = 2;
    ctx.beginPath();
    rows.forEach((r, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, sx(r.x1), sy(r[key])));
    ctx.stroke();
    ctx.setLineDash([]);
  };
  line('truth', '#333', [5, 4]);
  line('y_hat', '#1f5fb4', []);

  ctx.fillStyle = '#c0392b';
  for (const r of rows) if (r.degenerate) ctx.fillRect(sx(r.x1) - 2, sy(r.y_hat) - 2, 4, 4);
}

function drawGrid(canvas, cells, p) {
  const ctx = canvas.getContext('2d');
  const n = cells.length;
  const size = canvas.width / n;
  const flat = cells.flat();
  const max = Math.max(p * 2, ...flat);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  cells.forEach((row, i) => {
    row.forEach((v, j) => {
      // White at 0, dark red at max; row 0 is the bottom edge (x₂ = 0).
      const t = Math.min(1, v / max);
      ctx.fillStyle = `rgb(255, ${Math.round(255 * (1 - t))}, ${Math.round(255 * (1 - t))})`;
      ctx.fillRect(j * size, (n - 1 - i) * size, size, size);
      if (n <= 15) {
        ctx.fillStyle = t > 0.6 ? '#fff' : '#333';
        ctx.font = `${Math.max(8, size / 4.5)}px monospace`;
        ctx.fillText((100 * v).toFixed(1), j * size + 3, (n - 1 - i) * size + size / 2 + 4);
      }
    });
  });
}

async function main() {
  try {
    await init();
    $('status').textContent = 'Ready. Values in the heatmap are percentages.';
  } catch (e) {
    $('status').textContent = `Could not load the module: ${e}. Build it into www/pkg first (see the README).`;
    $('status').classList.add('error');
    return;
  }

  $('slice-form').addEventListener('submit', (ev) => {
    ev.preventDefault();
    const v = values(ev.target);
    run($('slice-info'), () => {
      const res = JSON.parse(prediction_slice(v.mode, +v.n, +v.b, +v.noise, +v.x2, 101, +v.level, BigInt(v.seed)));
      drawSlice($('slice-canvas'), res);
      const deg = res.rows.filter((r) => r.degenerate).length;
      $('slice-info').textContent = `s = ${res.s}, B = ${res.b}; ${deg} of ${res.rows.length} points had a negative corrected variance (red, zero width)`;
    });
  });
  $('slice-form').x2.addEventListener('change', () => $('slice-form').requestSubmit());

  $('grid-form').addEventListener('submit', (ev) => {
    ev.preventDefault();
    const v = values(ev.target);
    run($('grid-info'), () => {
      const res = JSON.parse(bias_grid(v.mode, +v.n, +v.s, +v.b, +v.res, +v.r, +v.p, 0n));
      drawGrid($('grid-canvas'), res.cells, +v.p);
      $('grid-info').textContent =
        `corner mean ${(100 * res.corner_mean).toFixed(2)}%, center mean ${(100 * res.center_mean).toFixed(2)}%, ` +
        `max |cell - p| ${(100 * res.max_abs_deviation).toFixed(2)}%`;
    });
  });

  $('oracle-form').addEventListener('submit', (ev) => {
    ev.preventDefault();
    const v = values(ev.target);
    const body = $('oracle-table').querySelector('tbody');
    run($('oracle-info'), () => {
      const res = JSON.parse(jackknife_oracle(v.labels, +v.s, +v.b, BigInt(v.seed)));
      const rows = [
        ['subsamples enumerated', res.subsamples],
        ['exact', res.exact.toExponential(6)],
        ['plug-in (B trees)', res.plugin.toExponential(6)],
        ['bias correction', res.correction.toExponential(6)],
        ['corrected', res.corrected.toExponential(6)],
        ['relative error', res.relative_error == null ? 'n/a' : (100 * res.relative_error).toFixed(3) + '%'],
      ];
      body.innerHTML = rows.map(([k, x]) => `<tr><td>${k}</td><td>${x}</td></tr>`).join('');
      $('oracle-info').textContent = `n = ${res.n}`;
    });
  });

  $('slice-form').requestSubmit();
  $('oracle-form').requestSubmit();
}

main();
