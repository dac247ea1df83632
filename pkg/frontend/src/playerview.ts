// Replay panel: canvas, transport controls, and per-body recoloring.
// Everything stateful lives in Player/OrbitCamera; this file only wires
// DOM events to them and runs the draw loop.

import { OrbitCamera } from './camera.js';
import { Player, PLAYBACK_SPEEDS } from './player.js';
import { drawFrame, type Rgb } from './render3d.js';
import type { SimLog } from './simlog.js';

// State
const player = new Player();
const camera = new OrbitCamera();
const colorOverrides = new Map<number, Rgb>();
let lastTimestamp: number | null = null;

// DOM elements, resolved in initPlayerView
let canvas: HTMLCanvasElement;
let ctx: CanvasRenderingContext2D;
let playBtn: HTMLButtonElement;
let scrub: HTMLInputElement;
let frameLabel: HTMLElement;
let captionEl: HTMLElement;
let speedGroup: HTMLElement;
let colorsGroup: HTMLElement;

function draw(): void {
  const frame = player.frame;
  const width = canvas.width;
  const height = canvas.height;
  if (player.log === null || frame === null) {
    ctx.fillStyle = '#14161a';
    ctx.fillRect(0, 0, width, height);
    ctx.fillStyle = '#6b7280';
    ctx.font = '13px system-ui, sans-serif';
    ctx.textAlign = 'center';
    ctx.fillText('no log loaded', width / 2, height / 2);
    return;
  }
  drawFrame(ctx, camera, player.log.header, frame, width, height, colorOverrides);
}

function updateTransport(): void {
  playBtn.textContent = player.playing ? 'pause' : 'play';
  scrub.max = String(Math.max(player.frameCount - 1, 0));
  scrub.value = String(player.frameIndex);
  const t = player.log === null ? 0 : player.frameIndex * player.log.header.dt;
  frameLabel.textContent = `${player.frameIndex} / ${Math.max(player.frameCount - 1, 0)}  (${t.toFixed(2)} s)`;
}

function loop(timestamp: number): void {
  const delta = lastTimestamp === null ? 0 : (timestamp - lastTimestamp) / 1000;
  lastTimestamp = timestamp;
  if (player.playing) {
    player.tick(delta);
    updateTransport();
    draw();
  }
  requestAnimationFrame(loop);
}

function hexToRgb(hex: string): Rgb {
  const n = parseInt(hex.slice(1), 16);
  return [((n >> 16) & 255) / 255, ((n >> 8) & 255) / 255, (n & 255) / 255];
}

function rgbToHex(color: Rgb): string {
  const channel = (v: number) =>
    Math.round(Math.min(Math.max(v, 0), 1) * 255)
      .toString(16)
      .padStart(2, '0');
  return `#${channel(color[0])}${channel(color[1])}${channel(color[2])}`;
}

// Rebuilds the per-body color pickers for the loaded log.  Recoloring is
// purely cosmetic and local: it updates the override map and redraws.
function buildColorPickers(log: SimLog): void {
  colorsGroup.replaceChildren();
  log.header.bodies.forEach((body, index) => {
    const label = document.createElement('label');
    label.className = 'body-color';
    const input = document.createElement('input');
    input.type = 'color';
    input.value = rgbToHex((body.color as Rgb | undefined) ?? [0.62, 0.66, 0.72]);
    input.addEventListener('input', () => {
      colorOverrides.set(index, hexToRgb(input.value));
      draw();
    });
    label.append(input, document.createTextNode(body.name));
    colorsGroup.appendChild(label);
  });
}

// Loads a parsed log into the replay panel and draws its first frame.
export function showLog(log: SimLog, caption: string): void {
  player.load(log);
  colorOverrides.clear();
  captionEl.textContent = caption;
  buildColorPickers(log);
  updateTransport();
  draw();
}

export function initPlayerView(): void {
  canvas = document.getElementById('player-canvas') as HTMLCanvasElement;
  ctx = canvas.getContext('2d') as CanvasRenderingContext2D;
  playBtn = document.getElementById('btn-play') as HTMLButtonElement;
  scrub = document.getElementById('scrub') as HTMLInputElement;
  frameLabel = document.getElementById('frame-label')!;
  captionEl = document.getElementById('player-caption')!;
  speedGroup = document.getElementById('speed-buttons')!;
  colorsGroup = document.getElementById('body-colors')!;

  playBtn.addEventListener('click', () => {
    if (player.playing) {
      player.pause();
    } else {
      player.play();
    }
    updateTransport();
  });

  scrub.addEventListener('input', () => {
    player.pause();
    player.scrubTo(Number(scrub.value));
    updateTransport();
    draw();
  });

  for (const speed of PLAYBACK_SPEEDS) {
    const btn = document.createElement('button');
    btn.textContent = `${speed}x`;
    btn.classList.toggle('active', speed === player.speed);
    btn.addEventListener('click', () => {
      player.setSpeed(speed);
      speedGroup.querySelectorAll('button').forEach((b) => b.classList.remove('active'));
      btn.classList.add('active');
    });
    speedGroup.appendChild(btn);
  }

  // Mouse: drag to orbit, shift-drag to pan, wheel to zoom.
  let dragging = false;
  let panning = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener('mousedown', (e) => {
    dragging = true;
    panning = e.shiftKey || e.button === 1;
    lastX = e.clientX;
    lastY = e.clientY;
    e.preventDefault();
  });
  window.addEventListener('mousemove', (e) => {
    if (!dragging) {
      return;
    }
    const dx = e.clientX - lastX;
    const dy = e.clientY - lastY;
    lastX = e.clientX;
    lastY = e.clientY;
    if (panning) {
      camera.pan(-dx, dy);
    } else {
      camera.orbit(-dx * 0.008, -dy * 0.008);
    }
    draw();
  });
  window.addEventListener('mouseup', () => {
    dragging = false;
  });
  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    camera.zoom(e.deltaY > 0 ? 1.1 : 1 / 1.1);
    draw();
  });

  updateTransport();
  draw();
  requestAnimationFrame(loop);
}
