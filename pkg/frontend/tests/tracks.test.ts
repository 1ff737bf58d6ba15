import assert from "node:assert/strict";
import { test } from "node:test";

import {
  addPoint,
  deserializeTracks,
  emptyTracks,
  removeSelectedTrack,
  selectTrack,
  serializeTracks,
  startNewTrack,
  validatePayload,
} from "../src/tracks.js";

test("two clicks on the same pixel form a 2-point zero-displacement track", () => {
  let state = emptyTracks();
  state = addPoint(state, { x: 5, y: 5 });
  state = addPoint(state, { x: 5, y: 5 });
  assert.deepEqual(state.tracks, [[{ x: 5, y: 5 }, { x: 5, y: 5 }]]);
});

test("serialize emits the wire schema", () => {
  let state = emptyTracks();
  state = addPoint(state, { x: 1, y: 2 });
  state = addPoint(state, { x: 3, y: 4 });
  state = startNewTrack(state);
  state = addPoint(state, { x: 9, y: 9 });
  const payload = serializeTracks(state, 8);
  assert.deepEqual(payload, {
    frames: 8,
    tracks: [
      [{ x: 1, y: 2 }, { x: 3, y: 4 }],
      [{ x: 9, y: 9 }],
    ],
  });
});

test("export then import reproduces identical polylines", () => {
  let state = emptyTracks();
  state = addPoint(state, { x: 10, y: 20 });
  state = addPoint(state, { x: 30, y: 40 });
  state = startNewTrack(state);
  state = addPoint(state, { x: 7, y: 7 });
  const payload = serializeTracks(state, 8);
  const roundTripped = deserializeTracks(JSON.parse(JSON.stringify(payload)));
  assert.deepEqual(
    roundTripped.tracks,
    state.tracks.filter((t) => t.length > 0),
  );
  assert.deepEqual(serializeTracks(roundTripped, 8), payload);
});

test("empty trailing track is not serialized", () => {
  let state = emptyTracks();
  state = addPoint(state, { x: 1, y: 1 });
  state = startNewTrack(state); // opens an empty track
  const payload = serializeTracks(state, 4);
  assert.equal(payload.tracks.length, 1);
});

test("track selection and deletion", () => {
  let state = emptyTracks();
  state = addPoint(state, { x: 1, y: 1 });
  state = startNewTrack(state);
  state = addPoint(state, { x: 2, y: 2 });
  state = selectTrack(state, 0);
  state = removeSelectedTrack(state);
  assert.deepEqual(state.tracks, [[{ x: 2, y: 2 }]]);
  state = removeSelectedTrack(state);
  assert.deepEqual(state.tracks, [[]]); // always keeps one editable track
});

test("validatePayload mirrors the server's checks", () => {
  assert.equal(validatePayload({ frames: 8, tracks: [[{ x: 0, y: 0 }]] }, 32, 32), null);
  assert.match(validatePayload({ frames: 1, tracks: [[{ x: 0, y: 0 }]] }, 32, 32) ?? "", /frames/);
  assert.match(validatePayload({ frames: 8, tracks: [] }, 32, 32) ?? "", /at least one/);
  assert.match(
    validatePayload({ frames: 8, tracks: [[{ x: 40, y: 0 }]] }, 32, 32) ?? "",
    /outside/,
  );
});

test("every UI-constructible state serializes validly", () => {
  // random click sequences through the UI ops always produce schema-valid output
  let seed = 12345;
  const rand = () => {
    seed = (seed * 1103515245 + 12345) & 0x7fffffff;
    return seed / 0x7fffffff;
  };
  for (let trial = 0; trial < 50; trial++) {
    let state = emptyTracks();
    const ops = 1 + Math.floor(rand() * 12);
    for (let i = 0; i < ops; i++) {
      const r = rand();
      if (r < 0.6) {
        state = addPoint(state, {
          x: Math.floor(rand() * 32),
          y: Math.floor(rand() * 32),
        });
      } else if (r < 0.8) {
        state = startNewTrack(state);
      } else {
        state = selectTrack(state, Math.floor(rand() * state.tracks.length));
      }
    }
    const payload = serializeTracks(state, 8);
    if (payload.tracks.length > 0) {
      assert.equal(validatePayload(payload, 32, 32), null);
    }
  }
});
