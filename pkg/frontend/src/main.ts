/** Application entry: wires the websocket client, the input mappers and
 * the renderer together.  The render loop reads only the latest frame;
 * the socket reader never waits on rendering.
 */

import { SteerClient } from "./connection.js";
import { GrabTracker, KeyboardMapper } from "./input.js";
import { parseObj } from "./objparser.js";
import { Renderer3D } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const statusLabel = el<HTMLSpanElement>("status");
const fpsLabel = el<HTMLSpanElement>("fps");
const rodSelect = el<HTMLSelectElement>("rod");
const insertSlider = el<HTMLInputElement>("insert-speed");
const rotateSlider = el<HTMLInputElement>("rotate-speed");
const messageLabel = el<HTMLSpanElement>("message");

const renderer = new Renderer3D(canvas);
const keyboard = new KeyboardMapper({
  insertSpeed: Number(insertSlider.value),
  rotateSpeed: Number(rotateSlider.value),
});
const grabs = new GrabTracker();

// `?server=host:port` points at a simulation service running elsewhere
// (e.g. when this page is served by a plain static file server)
const server = new URLSearchParams(location.search).get("server") ?? location.host;
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${server}/ws`;
const client = new SteerClient(wsUrl, {
  onStatus: (status) => {
    statusLabel.textContent = status;
    statusLabel.className = status;
  },
  onHello: async (hello) => {
    rodSelect.innerHTML = "";
    hello.scene.rods.forEach((_, i) => {
      const option = document.createElement("option");
      option.value = String(i);
      option.textContent = `rod ${i}`;
      rodSelect.appendChild(option);
    });
    if (hello.scene.mesh_url) {
      const response = await fetch(
        `${location.protocol}//${server}${hello.scene.mesh_url}`,
      );
      if (response.ok) renderer.setMesh(parseObj(await response.text()));
    }
  },
  onError: (error) => {
    messageLabel.textContent =
      error.code === "controller_bound"
        ? "another client controls the simulation — commands ignored"
        : `${error.code}: ${error.message}`;
  },
});

function sendSafe(command: Parameters<SteerClient["send"]>[0] | null): void {
  if (command) client.send(command).catch(() => undefined);
}

// -- keyboard steering (press-and-hold) --------------------------------------

window.addEventListener("keydown", (ev) => {
  keyboard.activeRod = Number(rodSelect.value || "0");
  const command = keyboard.keyDown(ev.key);
  if (command) {
    ev.preventDefault();
    sendSafe(command);
  }
});
window.addEventListener("keyup", (ev) => sendSafe(keyboard.keyUp(ev.key)));
insertSlider.addEventListener("input", () => {
  keyboard.config.insertSpeed = Number(insertSlider.value);
});
rotateSlider.addEventListener("input", () => {
  keyboard.config.rotateSpeed = Number(rotateSlider.value);
});

// -- mouse: left-drag on a point grabs it; otherwise orbit -------------------

let dragSlot = -1;
let orbiting = false;
let last = { x: 0, y: 0 };

function ndc(ev: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * 2 - 1,
    y: -(((ev.clientY - rect.top) / rect.height) * 2 - 1),
  };
}

canvas.addEventListener("pointerdown", (ev) => {
  const { x, y } = ndc(ev);
  const hit = renderer.pick(x, y);
  if (hit && client.view.scene) {
    const index = client.view.pointIndex(hit.rod, hit.point);
    const command = grabs.begin(hit.rod, index, hit.position, renderer.viewDirection());
    if (command) {
      dragSlot = grabs.slotFor(hit.rod, index);
      sendSafe(command);
      return;
    }
  }
  orbiting = true;
  last = { x: ev.clientX, y: ev.clientY };
});

canvas.addEventListener("pointermove", (ev) => {
  if (dragSlot >= 0) {
    const { x, y } = ndc(ev);
    const ray = renderer.pointerRay(x, y);
    sendSafe(grabs.move(dragSlot, ray.origin, ray.dir));
  } else if (orbiting) {
    renderer.orbitBy((ev.clientX - last.x) * 0.01, (ev.clientY - last.y) * 0.01);
    last = { x: ev.clientX, y: ev.clientY };
  }
});

window.addEventListener("pointerup", () => {
  if (dragSlot >= 0) {
    sendSafe(grabs.end(dragSlot));
    dragSlot = -1;
  }
  orbiting = false;
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  renderer.zoomBy(ev.deltaY > 0 ? 1.1 : 0.9);
});

// -- render loop -------------------------------------------------------------

let framesDrawn = 0;
let lastDrawnSequence = -1;
setInterval(() => {
  fpsLabel.textContent = `${framesDrawn} fps`;
  framesDrawn = 0;
}, 1000);

function animate(): void {
  requestAnimationFrame(animate);
  renderer.resize();
  if (client.view.latestSequence > lastDrawnSequence) {
    lastDrawnSequence = client.view.latestSequence;
    renderer.updateRods(client.view.polylines);
  }
  renderer.render();
  framesDrawn += 1;
}

client.connect();
animate();
