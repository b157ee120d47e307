// Map scene: pure computation of draw primitives from the session store
// (testable without a canvas), plus a thin painter for the real 2D context.

import { GridMeta } from "./envelope.js";
import { SessionStore } from "./state.js";
import { CELL_COLORS, decodeCells, fitTransform, MapTransform, worldToPixel } from "./transform.js";

export interface MapScene {
  transform: MapTransform | null;
  grid: { meta: GridMeta; cells: Uint8Array } | null;
  robots: {
    id: string;
    px: number;
    py: number;
    heading: number;
    mode: string;
    selected: boolean;
    trail: [number, number][];
    path: [number, number][];
  }[];
  markers: { kind: string; px: number; py: number }[];
  convoyLinks: [number, number][][];
}

export function pickMapMeta(store: SessionStore): GridMeta | null {
  // one shared world: any robot's latest downsampled grid shows it; prefer
  // the selected robot's, falling back to the first available
  for (const rid of store.selection) {
    const meta = store.robots.get(rid)?.map;
    if (meta) return meta;
  }
  for (const view of store.robots.values()) {
    if (view.map) return view.map;
  }
  return null;
}

export function computeScene(store: SessionStore, canvasW: number, canvasH: number): MapScene {
  const meta = pickMapMeta(store);
  if (!meta) {
    return { transform: null, grid: null, robots: [], markers: [], convoyLinks: [] };
  }
  const t = fitTransform(meta, canvasW, canvasH);
  const robots: MapScene["robots"] = [];
  const markers: MapScene["markers"] = [];
  const markerSeen = new Set<string>();
  const byConvoy = new Map<string, { index: number; px: number; py: number }[]>();

  for (const [rid, view] of store.robots) {
    const telem = view.telemetry;
    if (!telem) continue;
    const [px, py] = worldToPixel(t, telem.pose[0], telem.pose[1]);
    robots.push({
      id: rid,
      px,
      py,
      heading: telem.pose[2],
      mode: telem.mode,
      selected: store.selection.includes(rid),
      trail: view.trail.map(([x, y]) => worldToPixel(t, x, y)),
      path: telem.path.map(([x, y]) => worldToPixel(t, x, y)),
    });
    for (const m of telem.markers) {
      const key = `${m.kind}:${m.x}:${m.y}`;
      if (markerSeen.has(key)) continue;
      markerSeen.add(key);
      const [mx, my] = worldToPixel(t, m.x, m.y);
      markers.push({ kind: m.kind, px: mx, py: my });
    }
    const convoy = view.bt?.convoy;
    if (convoy) {
      const list = byConvoy.get(convoy.convoy_id) ?? [];
      list.push({ index: convoy.index, px, py });
      byConvoy.set(convoy.convoy_id, list);
    }
  }
  const convoyLinks: [number, number][][] = [];
  for (const members of byConvoy.values()) {
    members.sort((a, b) => a.index - b.index);
    if (members.length >= 2) convoyLinks.push(members.map((m) => [m.px, m.py]));
  }
  return { transform: t, grid: { meta, cells: decodeCells(meta.cells) }, robots, markers, convoyLinks };
}

type Ctx2D = CanvasRenderingContext2D;

export function drawScene(ctx: Ctx2D, scene: MapScene, canvasW: number, canvasH: number): void {
  ctx.fillStyle = "#1a1a22";
  ctx.fillRect(0, 0, canvasW, canvasH);
  if (!scene.transform || !scene.grid) {
    ctx.fillStyle = "#888";
    ctx.fillText("no map yet", canvasW / 2 - 30, canvasH / 2);
    return;
  }
  const { meta, cells } = scene.grid;
  const t = scene.transform;
  const cellPx = meta.resolution * t.scale;
  for (let r = 0; r < meta.height; r++) {
    for (let c = 0; c < meta.width; c++) {
      const v = cells[r * meta.width + c];
      ctx.fillStyle = CELL_COLORS[v] ?? "#f0f";
      const wx = meta.origin[0] + c * meta.resolution;
      const wy = meta.origin[1] + (r + 1) * meta.resolution;
      const [px, py] = worldToPixel(t, wx, wy);
      ctx.fillRect(px, py, cellPx + 0.5, cellPx + 0.5);
    }
  }
  for (const link of scene.convoyLinks) {
    ctx.strokeStyle = "#f5a623";
    ctx.lineWidth = 2;
    ctx.beginPath();
    link.forEach(([px, py], i) => (i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py)));
    ctx.stroke();
  }
  for (const robot of scene.robots) {
    if (robot.trail.length > 1) {
      ctx.strokeStyle = "rgba(110, 168, 254, 0.5)";
      ctx.lineWidth = 1;
      ctx.beginPath();
      robot.trail.forEach(([px, py], i) => (i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py)));
      ctx.stroke();
    }
    if (robot.path.length > 1) {
      ctx.strokeStyle = "#3ddc84";
      ctx.lineWidth = 2;
      ctx.beginPath();
      robot.path.forEach(([px, py], i) => (i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py)));
      ctx.stroke();
    }
    ctx.fillStyle = robot.selected ? "#6ea8fe" : "#c0c0cc";
    ctx.beginPath();
    ctx.arc(robot.px, robot.py, 7, 0, Math.PI * 2);
    ctx.fill();
    ctx.strokeStyle = "#11111a";
    ctx.beginPath();
    ctx.moveTo(robot.px, robot.py);
    ctx.lineTo(
      robot.px + 11 * Math.cos(robot.heading),
      robot.py - 11 * Math.sin(robot.heading),
    );
    ctx.stroke();
    ctx.fillStyle = "#e8e8f0";
    ctx.font = "11px sans-serif";
    ctx.fillText(`${robot.id} · ${robot.mode}`, robot.px + 9, robot.py - 9);
  }
  for (const marker of scene.markers) {
    ctx.fillStyle = "#ffffff";
    ctx.beginPath();
    ctx.moveTo(marker.px, marker.py - 6);
    ctx.lineTo(marker.px + 5, marker.py + 4);
    ctx.lineTo(marker.px - 5, marker.py + 4);
    ctx.closePath();
    ctx.fill();
  }
}
