import assert from "node:assert/strict";
import { test } from "node:test";

import { advance, initialPlayback, scrub, toggleHeatmap, togglePlay } from "../src/playback.js";

test("play advances and wraps", () => {
  let s = togglePlay(initialPlayback(3));
  assert.equal(s.playing, true);
  s = advance(s);
  s = advance(s);
  s = advance(s);
  assert.equal(s.frameIndex, 0); // wrapped
});

test("scrub clamps and pauses", () => {
  let s = togglePlay(initialPlayback(5));
  s = scrub(s, 99);
  assert.equal(s.frameIndex, 4);
  assert.equal(s.playing, false);
  s = scrub(s, -3);
  assert.equal(s.frameIndex, 0);
});

test("heatmap toggle pauses playback", () => {
  let s = togglePlay(initialPlayback(4));
  s = toggleHeatmap(s);
  assert.equal(s.showHeatmap, true);
  assert.equal(s.playing, false);
  s = toggleHeatmap(s);
  assert.equal(s.showHeatmap, false);
});

test("empty playback is inert", () => {
  let s = initialPlayback(0);
  s = togglePlay(s);
  assert.equal(s.playing, false);
  assert.equal(advance(s).frameIndex, 0);
});
