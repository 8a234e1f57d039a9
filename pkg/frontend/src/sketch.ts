/** Canvas landmark sketches so samples without raster images still get
 * a visual card. */
import type { Point, SamplePayload } from "./types.js";

const FACE_EDGES: [string, string][] = [
  ["left_eye_outer", "left_eye_inner"],
  ["left_eye_top", "left_eye_bottom"],
  ["right_eye_outer", "right_eye_inner"],
  ["right_eye_top", "right_eye_bottom"],
  ["mouth_left", "mouth_top"],
  ["mouth_top", "mouth_right"],
  ["mouth_right", "mouth_bottom"],
  ["mouth_bottom", "mouth_left"],
  ["face_top", "face_bottom"],
];

const POSTURE_EDGES: [string, string][] = [
  ["head", "neck"],
  ["neck", "left_shoulder"],
  ["neck", "right_shoulder"],
  ["left_shoulder", "left_elbow"],
  ["left_elbow", "left_wrist"],
  ["right_shoulder", "right_elbow"],
  ["right_elbow", "right_wrist"],
  ["neck", "left_hip"],
  ["neck", "right_hip"],
  ["left_hip", "right_hip"],
  ["left_hip", "left_knee"],
  ["left_knee", "left_ankle"],
  ["right_hip", "right_knee"],
  ["right_knee", "right_ankle"],
];

function drawPoints(ctx: CanvasRenderingContext2D, points: Record<string, Point>,
                    edges: [string, string][], width: number, height: number,
                    color: string): void {
  const xs = Object.values(points).map((p) => p[0]);
  const ys = Object.values(points).map((p) => p[1]);
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const span = Math.max(maxX - minX, maxY - minY) || 1;
  const pad = 8;
  const scale = (Math.min(width, height) - 2 * pad) / span;
  const sx = (x: number) => pad + (x - minX) * scale;
  const sy = (y: number) => pad + (y - minY) * scale;

  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  for (const [a, b] of edges) {
    if (points[a] && points[b]) {
      ctx.beginPath();
      ctx.moveTo(sx(points[a][0]), sy(points[a][1]));
      ctx.lineTo(sx(points[b][0]), sy(points[b][1]));
      ctx.stroke();
    }
  }
  ctx.fillStyle = color;
  for (const [x, y] of Object.values(points)) {
    ctx.beginPath();
    ctx.arc(sx(x), sy(y), 2, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function drawSample(canvas: HTMLCanvasElement, sample: SamplePayload): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const half = canvas.width / 2;
  if (sample.face) {
    drawPoints(ctx, sample.face, FACE_EDGES, half, canvas.height, "#2b6cb0");
  }
  if (sample.posture) {
    ctx.save();
    ctx.translate(half, 0);
    drawPoints(ctx, sample.posture, POSTURE_EDGES, half, canvas.height, "#b03a2b");
    ctx.restore();
  }
}
