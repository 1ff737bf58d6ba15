/**
 * DOM wiring for the studio page: canvas drawing, event handling, and the
 * upload -> draw -> generate -> play loop. All geometry and state logic
 * lives in the pure modules; this file is glue.
 */

import { ApiError, FlowArrow, StudioApi } from "./api.js";
import { ViewTransform, commitClick, fitView, imageToCanvas } from "./coords.js";
import { PlaybackState, advance, initialPlayback, scrub, toggleHeatmap, togglePlay } from "./playback.js";
import { PollHandle, pollJob } from "./polling.js";
import {
  TrackState,
  addPoint,
  deserializeTracks,
  emptyTracks,
  removeSelectedTrack,
  serializeTracks,
  startNewTrack,
  validatePayload,
} from "./tracks.js";

const FRAME_INTERVAL_MS = 250;

type Elements = {
  canvas: HTMLCanvasElement;
  fileInput: HTMLInputElement;
  statusLine: HTMLElement;
  newTrackBtn: HTMLButtonElement;
  deleteTrackBtn: HTMLButtonElement;
  exportBtn: HTMLButtonElement;
  importInput: HTMLInputElement;
  generateBtn: HTMLButtonElement;
  playBtn: HTMLButtonElement;
  heatmapBtn: HTMLButtonElement;
  scrubber: HTMLInputElement;
  framesInput: HTMLInputElement;
  seedInput: HTMLInputElement;
};

export class Studio {
  private api: StudioApi;
  private els: Elements;
  private sessionId: string | null = null;
  private image: HTMLImageElement | null = null;
  private view: ViewTransform = { zoom: 1, panX: 0, panY: 0 };
  private tracks: TrackState = emptyTracks();
  private arrows: FlowArrow[] = [];
  private playback: PlaybackState = initialPlayback(0);
  private frames: HTMLImageElement[] = [];
  private heatmap: HTMLImageElement | null = null;
  private poll: PollHandle | null = null;
  private ticker: number | null = null;

  constructor(els: Elements, api?: StudioApi) {
    this.els = els;
    this.api = api ?? new StudioApi("");
    this.bind();
  }

  private bind() {
    this.els.fileInput.addEventListener("change", () => void this.onUpload());
    this.els.canvas.addEventListener("click", (ev) => this.onCanvasClick(ev));
    this.els.newTrackBtn.addEventListener("click", () => {
      this.tracks = startNewTrack(this.tracks);
      this.redraw();
    });
    this.els.deleteTrackBtn.addEventListener("click", () => {
      this.tracks = removeSelectedTrack(this.tracks);
      this.arrows = [];
      this.redraw();
    });
    this.els.exportBtn.addEventListener("click", () => this.onExport());
    this.els.importInput.addEventListener("change", () => void this.onImport());
    this.els.generateBtn.addEventListener("click", () => void this.onGenerate());
    this.els.playBtn.addEventListener("click", () => {
      this.playback = togglePlay(this.playback);
      this.syncTicker();
      this.redraw();
    });
    this.els.heatmapBtn.addEventListener("click", () => {
      this.playback = toggleHeatmap(this.playback);
      this.syncTicker();
      this.redraw();
    });
    this.els.scrubber.addEventListener("input", () => {
      this.playback = scrub(this.playback, Number(this.els.scrubber.value));
      this.syncTicker();
      this.redraw();
    });
  }

  private status(text: string) {
    this.els.statusLine.textContent = text;
  }

  private async onUpload() {
    const file = this.els.fileInput.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    bytes.forEach((b) => (binary += String.fromCharCode(b)));
    const b64 = btoa(binary);
    try {
      const session = await this.api.createSession(b64);
      this.sessionId = session.session_id;
      this.image = new Image();
      this.image.onload = () => {
        this.view = fitView(
          session.width,
          session.height,
          this.els.canvas.width,
          this.els.canvas.height,
        );
        this.tracks = emptyTracks();
        this.arrows = [];
        this.frames = [];
        this.playback = initialPlayback(0);
        this.status(`session ${session.session_id}: ${session.width}x${session.height}`);
        this.redraw();
      };
      this.image.src = URL.createObjectURL(file);
    } catch (err) {
      this.status(err instanceof ApiError ? `upload rejected: ${err.detail}` : `upload failed: ${err}`);
    }
  }

  private onCanvasClick(ev: MouseEvent) {
    if (!this.image || !this.sessionId) return;
    const rect = this.els.canvas.getBoundingClientRect();
    const point = commitClick(
      this.view,
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      this.image.naturalWidth,
      this.image.naturalHeight,
    );
    if (point === null) {
      this.status("click ignored: outside the image");
      return;
    }
    this.tracks = addPoint(this.tracks, point);
    this.redraw();
  }

  private onExport() {
    const payload = serializeTracks(this.tracks, Number(this.els.framesInput.value));
    const blob = new Blob([JSON.stringify(payload, null, 2)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "trajectory.json";
    a.click();
  }

  private async onImport() {
    const file = this.els.importInput.files?.[0];
    if (!file) return;
    try {
      const payload = JSON.parse(await file.text());
      this.tracks = deserializeTracks(payload);
      if (Number.isInteger(payload.frames)) {
        this.els.framesInput.value = String(payload.frames);
      }
      this.redraw();
      this.status(`imported ${payload.tracks.length} tracks`);
    } catch (err) {
      this.status(`import failed: ${err}`);
    }
  }

  private async onGenerate() {
    if (!this.sessionId || !this.image) {
      this.status("upload a frame first");
      return;
    }
    const frames = Number(this.els.framesInput.value);
    const payload = serializeTracks(this.tracks, frames);
    const problem = validatePayload(payload, this.image.naturalWidth, this.image.naturalHeight);
    if (problem !== null) {
      this.status(problem);
      return;
    }
    this.poll?.cancel();
    try {
      const traj = await this.api.postTrajectories(this.sessionId, payload);
      this.arrows = traj.sparse_flow_preview;
      this.redraw();
      const job = await this.api.createJob(
        this.sessionId,
        traj.trajectory_id,
        Number(this.els.seedInput.value) || 0,
      );
      this.status(`job ${job.job_id} queued`);
      this.poll = pollJob(this.api, job.job_id, (s) =>
        this.status(`job ${job.job_id}: ${s.status} (${Math.round(s.progress * 100)}%)`),
      );
      const final = await this.poll.promise;
      if (final.status === "failed") {
        this.status(`generation failed: ${final.error ?? "unknown error"}`);
        return;
      }
      await this.loadResults(job.job_id, frames);
    } catch (err) {
      this.status(err instanceof ApiError ? `server rejected: ${err.detail}` : `request failed: ${err}`);
    }
  }

  private loadImage(url: string): Promise<HTMLImageElement> {
    return new Promise((resolve, reject) => {
      const img = new Image();
      img.onload = () => resolve(img);
      img.onerror = () => reject(new Error(`cannot load ${url}`));
      img.src = url;
    });
  }

  private async loadResults(jobId: string, frames: number) {
    this.frames = await Promise.all(
      Array.from({ length: frames }, (_, k) => this.loadImage(this.api.frameUrl(jobId, k))),
    );
    this.heatmap = await this.loadImage(this.api.heatmapUrl(jobId));
    this.playback = initialPlayback(this.frames.length);
    this.els.scrubber.max = String(this.frames.length - 1);
    this.status(`job ${jobId} done: ${this.frames.length} frames`);
    this.redraw();
  }

  private syncTicker() {
    if (this.playback.playing && this.ticker === null) {
      this.ticker = window.setInterval(() => {
        this.playback = advance(this.playback);
        this.els.scrubber.value = String(this.playback.frameIndex);
        this.redraw();
      }, FRAME_INTERVAL_MS);
    } else if (!this.playback.playing && this.ticker !== null) {
      window.clearInterval(this.ticker);
      this.ticker = null;
    }
  }

  private redraw() {
    const ctx = this.els.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.els.canvas.width, this.els.canvas.height);
    ctx.imageSmoothingEnabled = false;
    const base = this.playback.showHeatmap
      ? this.heatmap
      : this.frames.length > 0
        ? this.frames[this.playback.frameIndex]
        : this.image;
    if (!base) return;
    ctx.drawImage(
      base,
      this.view.panX,
      this.view.panY,
      base.naturalWidth * this.view.zoom,
      base.naturalHeight * this.view.zoom,
    );
    if (this.frames.length === 0) {
      this.drawTracks(ctx);
      this.drawArrows(ctx);
    }
  }

  private drawTracks(ctx: CanvasRenderingContext2D) {
    this.tracks.tracks.forEach((track, idx) => {
      if (track.length === 0) return;
      ctx.strokeStyle = idx === this.tracks.selected ? "#ff3b30" : "#ffd60a";
      ctx.fillStyle = ctx.strokeStyle;
      ctx.lineWidth = 2;
      ctx.beginPath();
      track.forEach((p, i) => {
        const c = imageToCanvas(this.view, p.x, p.y);
        if (i === 0) ctx.moveTo(c.x, c.y);
        else ctx.lineTo(c.x, c.y);
      });
      ctx.stroke();
      track.forEach((p, i) => {
        const c = imageToCanvas(this.view, p.x, p.y);
        ctx.beginPath();
        ctx.arc(c.x, c.y, i === 0 ? 4 : 3, 0, 2 * Math.PI);
        ctx.fill();
      });
      if (track.length >= 2) {
        this.drawArrowHead(ctx, track[track.length - 2], track[track.length - 1]);
      }
    });
  }

  private drawArrowHead(ctx: CanvasRenderingContext2D, from: { x: number; y: number }, to: { x: number; y: number }) {
    const a = imageToCanvas(this.view, from.x, from.y);
    const b = imageToCanvas(this.view, to.x, to.y);
    const angle = Math.atan2(b.y - a.y, b.x - a.x);
    const size = 8;
    ctx.beginPath();
    ctx.moveTo(b.x, b.y);
    ctx.lineTo(b.x - size * Math.cos(angle - 0.4), b.y - size * Math.sin(angle - 0.4));
    ctx.lineTo(b.x - size * Math.cos(angle + 0.4), b.y - size * Math.sin(angle + 0.4));
    ctx.closePath();
    ctx.fill();
  }

  private drawArrows(ctx: CanvasRenderingContext2D) {
    ctx.strokeStyle = "#32d74b";
    ctx.fillStyle = ctx.strokeStyle;
    ctx.lineWidth = 1.5;
    for (const arrow of this.arrows) {
      const from = imageToCanvas(this.view, arrow.x, arrow.y);
      const to = imageToCanvas(this.view, arrow.x + arrow.dx, arrow.y + arrow.dy);
      ctx.beginPath();
      ctx.moveTo(from.x, from.y);
      ctx.lineTo(to.x, to.y);
      ctx.stroke();
      this.drawArrowHead(ctx, { x: arrow.x, y: arrow.y }, { x: arrow.x + arrow.dx, y: arrow.y + arrow.dy });
    }
  }
}
