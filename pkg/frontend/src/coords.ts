/**
 * Canvas <-> image coordinate mapping under zoom/pan.
 *
 * The view draws the image scaled by `zoom` with its top-left image corner
 * at canvas offset (panX, panY). Committed points snap to integer image
 * pixels so serialized trajectories are stable across zoom levels.
 */

export type ViewTransform = {
  zoom: number;
  panX: number;
  panY: number;
};

export type Point = { x: number; y: number };

export function canvasToImage(view: ViewTransform, canvasX: number, canvasY: number): Point {
  return {
    x: (canvasX - view.panX) / view.zoom,
    y: (canvasY - view.panY) / view.zoom,
  };
}

export function imageToCanvas(view: ViewTransform, imageX: number, imageY: number): Point {
  return {
    x: imageX * view.zoom + view.panX,
    y: imageY * view.zoom + view.panY,
  };
}

/** Snap to the nearest integer image pixel; null when outside the image. */
export function commitClick(
  view: ViewTransform,
  canvasX: number,
  canvasY: number,
  imageWidth: number,
  imageHeight: number,
): Point | null {
  const raw = canvasToImage(view, canvasX, canvasY);
  const x = Math.round(raw.x);
  const y = Math.round(raw.y);
  if (x < 0 || x > imageWidth - 1 || y < 0 || y > imageHeight - 1) {
    return null;
  }
  return { x, y };
}

/** Default view: fit the whole image into the canvas, centered. */
export function fitView(
  imageWidth: number,
  imageHeight: number,
  canvasWidth: number,
  canvasHeight: number,
): ViewTransform {
  const zoom = Math.min(canvasWidth / imageWidth, canvasHeight / imageHeight);
  return {
    zoom,
    panX: (canvasWidth - imageWidth * zoom) / 2,
    panY: (canvasHeight - imageHeight * zoom) / 2,
  };
}
