// Brush strokes rasterized straight into the binary mask that goes over
// the wire. The overlay is always rendered FROM this buffer, so what the
// user sees and what the server receives cannot drift apart.

export class BrushMask {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
      throw new Error(`bad mask dimensions ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  // Fill every pixel whose center lies within `radius` of (cx, cy).
  stamp(cx: number, cy: number, radius: number): void {
    const r2 = radius * radius;
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    for (let iy = y0; iy <= y1; iy++) {
      const dy = iy + 0.5 - cy;
      for (let ix = x0; ix <= x1; ix++) {
        const dx = ix + 0.5 - cx;
        if (dx * dx + dy * dy <= r2) this.data[iy * this.width + ix] = 1;
      }
    }
  }

  // Sweep the brush along a segment; stamp spacing of half a pixel leaves
  // no gaps at any radius.
  line(x0: number, y0: number, x1: number, y1: number, radius: number): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0) * 2));
    for (let i = 0; i <= steps; i++) {
      this.stamp(x0 + ((x1 - x0) * i) / steps, y0 + ((y1 - y0) * i) / steps, radius);
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  count(): number {
    let n = 0;
    for (let i = 0; i < this.data.length; i++) n += this.data[i];
    return n;
  }
}

// RGBA pixels for the overlay canvas: transparent exactly where the mask
// is 0, the given color where it is 1.
export function overlayPixels(
  mask: Uint8Array,
  color: [number, number, number, number] = [255, 64, 64, 150],
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(mask.length * 4);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      out[i * 4] = color[0];
      out[i * 4 + 1] = color[1];
      out[i * 4 + 2] = color[2];
      out[i * 4 + 3] = color[3];
    }
  }
  return out;
}
