/** Frame playback state: play/pause/scrub plus the heatmap toggle. */

export type PlaybackState = {
  frameCount: number;
  frameIndex: number;
  playing: boolean;
  showHeatmap: boolean;
};

export function initialPlayback(frameCount: number): PlaybackState {
  return { frameCount, frameIndex: 0, playing: false, showHeatmap: false };
}

export function togglePlay(state: PlaybackState): PlaybackState {
  if (state.frameCount === 0) return state;
  return { ...state, playing: !state.playing, showHeatmap: false };
}

export function advance(state: PlaybackState): PlaybackState {
  if (!state.playing || state.frameCount === 0) return state;
  return { ...state, frameIndex: (state.frameIndex + 1) % state.frameCount };
}

export function scrub(state: PlaybackState, index: number): PlaybackState {
  if (state.frameCount === 0) return state;
  const clamped = Math.min(Math.max(index, 0), state.frameCount - 1);
  return { ...state, frameIndex: clamped, playing: false };
}

export function toggleHeatmap(state: PlaybackState): PlaybackState {
  return { ...state, showHeatmap: !state.showHeatmap, playing: false };
}
