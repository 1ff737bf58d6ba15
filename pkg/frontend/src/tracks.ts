/**
 * Trajectory editing state and the wire schema shared with the server.
 *
 * The client never computes flow itself: it stores committed integer-pixel
 * points, serializes them as {frames, tracks:[[{x,y},...],...]}, and draws
 * whatever sparse-flow preview the server returns.
 */

import type { Point } from "./coords.js";

export type TrajectoryPayload = {
  frames: number;
  tracks: { x: number; y: number }[][];
};

export type TrackState = {
  tracks: Point[][];
  selected: number;
};

export function emptyTracks(): TrackState {
  return { tracks: [[]], selected: 0 };
}

export function addPoint(state: TrackState, point: Point): TrackState {
  const tracks = state.tracks.map((t, i) =>
    i === state.selected ? [...t, { x: point.x, y: point.y }] : t,
  );
  return { ...state, tracks };
}

export function startNewTrack(state: TrackState): TrackState {
  const last = state.tracks[state.tracks.length - 1];
  if (last.length === 0) {
    return { ...state, selected: state.tracks.length - 1 };
  }
  return { tracks: [...state.tracks, []], selected: state.tracks.length };
}

export function selectTrack(state: TrackState, index: number): TrackState {
  if (index < 0 || index >= state.tracks.length) return state;
  return { ...state, selected: index };
}

export function removeSelectedTrack(state: TrackState): TrackState {
  const tracks = state.tracks.filter((_, i) => i !== state.selected);
  if (tracks.length === 0) tracks.push([]);
  return { tracks, selected: Math.min(state.selected, tracks.length - 1) };
}

export function committedTracks(state: TrackState): Point[][] {
  return state.tracks.filter((t) => t.length > 0);
}

export function serializeTracks(state: TrackState, frames: number): TrajectoryPayload {
  return {
    frames,
    tracks: committedTracks(state).map((t) => t.map((p) => ({ x: p.x, y: p.y }))),
  };
}

export function deserializeTracks(payload: TrajectoryPayload): TrackState {
  const tracks = payload.tracks.map((t) => t.map((p) => ({ x: p.x, y: p.y })));
  if (tracks.length === 0) tracks.push([]);
  return { tracks, selected: tracks.length - 1 };
}

/** Validation mirror of the server's schema checks, for inline feedback. */
export function validatePayload(
  payload: TrajectoryPayload,
  width: number,
  height: number,
): string | null {
  if (!Number.isInteger(payload.frames) || payload.frames < 2) {
    return `frames must be an integer >= 2, got ${payload.frames}`;
  }
  if (payload.tracks.length === 0) {
    return "draw at least one trajectory";
  }
  for (let ti = 0; ti < payload.tracks.length; ti++) {
    const track = payload.tracks[ti];
    if (track.length === 0) return `track ${ti} is empty`;
    for (let pi = 0; pi < track.length; pi++) {
      const { x, y } = track[pi];
      if (x < 0 || x > width - 1 || y < 0 || y > height - 1) {
        return `track ${ti} point ${pi} (${x},${y}) is outside the image`;
      }
    }
  }
  return null;
}
