import { Studio } from "./studio.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

window.addEventListener("DOMContentLoaded", () => {
  new Studio({
    canvas: el<HTMLCanvasElement>("studio-canvas"),
    fileInput: el<HTMLInputElement>("frame-upload"),
    statusLine: el<HTMLElement>("status-line"),
    newTrackBtn: el<HTMLButtonElement>("new-track"),
    deleteTrackBtn: el<HTMLButtonElement>("delete-track"),
    exportBtn: el<HTMLButtonElement>("export-tracks"),
    importInput: el<HTMLInputElement>("import-tracks"),
    generateBtn: el<HTMLButtonElement>("generate"),
    playBtn: el<HTMLButtonElement>("play-pause"),
    heatmapBtn: el<HTMLButtonElement>("toggle-heatmap"),
    scrubber: el<HTMLInputElement>("scrubber"),
    framesInput: el<HTMLInputElement>("frames-input"),
    seedInput: el<HTMLInputElement>("seed-input"),
  });
});
