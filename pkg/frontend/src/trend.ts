/** Inline SVG line chart of the mismatch-rate history. */
import { formatRate, trendPoints } from "./state.js";
import type { RetrainReport } from "./types.js";

export function renderTrend(reports: RetrainReport[]): string {
  const points = trendPoints(reports);
  if (points.length === 0) {
    return '<p class="muted">No retraining runs yet.</p>';
  }
  const width = 420, height = 160, pad = 28;
  const maxRate = Math.max(...points.map((p) => p.rate), 0.01);
  const x = (i: number) =>
    pad + (points.length === 1 ? 0 : (i * (width - 2 * pad)) / (points.length - 1));
  const y = (rate: number) => height - pad - (rate / maxRate) * (height - 2 * pad);
  const path = points.map((p, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(1)},${y(p.rate).toFixed(1)}`).join(" ");
  const dots = points.map((p, i) =>
    `<circle cx="${x(i).toFixed(1)}" cy="${y(p.rate).toFixed(1)}" r="3">` +
    `<title>${p.label}: ${formatRate(p.rate)}</title></circle>`).join("");
  const labels = points.map((p, i) =>
    `<text x="${x(i).toFixed(1)}" y="${height - 8}" text-anchor="middle">${p.label}</text>`).join("");
  return `
    <svg viewBox="0 0 ${width} ${height}" class="trend" role="img"
         aria-label="mismatch rate trend">
      <path d="${path}" fill="none" stroke="#2b6cb0" stroke-width="2"></path>
      <g fill="#2b6cb0">${dots}</g>
      <g class="trend-labels">${labels}</g>
    </svg>`;
}
