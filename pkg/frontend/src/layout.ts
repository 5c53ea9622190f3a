/** Deterministic force-directed layout.
 *
 * Seeded PRNG plus a fixed iteration count: the same graph and seed always
 * produce identical coordinates, so screenshots are comparable across runs.
 */

import type { GraphEdge } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface LayoutOptions {
  width?: number;
  height?: number;
  seed?: number;
  iterations?: number;
}

export function layoutGraph(
  nodes: string[],
  edges: GraphEdge[],
  options: LayoutOptions = {},
): Map<string, Point> {
  const width = options.width ?? 640;
  const height = options.height ?? 420;
  const seed = options.seed ?? 7;
  const iterations = options.iterations ?? 250;
  const rand = mulberry32(seed);
  const n = nodes.length;
  const index = new Map(nodes.map((v, i) => [v, i]));
  const pos = nodes.map((_, i) => {
    // seeded ring start with jitter: stable and avoids coincident points
    const angle = (2 * Math.PI * i) / Math.max(n, 1);
    const radius = Math.min(width, height) * 0.32;
    return {
      x: width / 2 + radius * Math.cos(angle) + (rand() - 0.5) * 20,
      y: height / 2 + radius * Math.sin(angle) + (rand() - 0.5) * 20,
    };
  });
  if (n <= 1) {
    return new Map(nodes.map((v, i) => [v, pos[i]]));
  }
  const links = edges
    .map((e) => [index.get(e.from), index.get(e.to)] as [number, number])
    .filter(([a, b]) => a !== undefined && b !== undefined);
  const k = Math.sqrt((width * height) / n);
  for (let iter = 0; iter < iterations; iter++) {
    const cooling = 1 - iter / iterations;
    const disp = pos.map(() => ({ x: 0, y: 0 }));
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const dx = pos[i].x - pos[j].x;
        const dy = pos[i].y - pos[j].y;
        const dist = Math.max(Math.hypot(dx, dy), 0.01);
        const force = (k * k) / dist;
        disp[i].x += (dx / dist) * force;
        disp[i].y += (dy / dist) * force;
        disp[j].x -= (dx / dist) * force;
        disp[j].y -= (dy / dist) * force;
      }
    }
    for (const [a, b] of links) {
      const dx = pos[a].x - pos[b].x;
      const dy = pos[a].y - pos[b].y;
      const dist = Math.max(Math.hypot(dx, dy), 0.01);
      const force = (dist * dist) / k;
      disp[a].x -= (dx / dist) * force;
      disp[a].y -= (dy / dist) * force;
      disp[b].x += (dx / dist) * force;
      disp[b].y += (dy / dist) * force;
    }
    const maxStep = 12 * cooling + 0.5;
    for (let i = 0; i < n; i++) {
      const len = Math.max(Math.hypot(disp[i].x, disp[i].y), 0.01);
      const step = Math.min(len, maxStep);
      pos[i].x += (disp[i].x / len) * step;
      pos[i].y += (disp[i].y / len) * step;
      pos[i].x = Math.min(width - 30, Math.max(30, pos[i].x));
      pos[i].y = Math.min(height - 30, Math.max(30, pos[i].y));
    }
  }
  return new Map(nodes.map((v, i) => [v, { x: pos[i].x, y: pos[i].y }]));
}
