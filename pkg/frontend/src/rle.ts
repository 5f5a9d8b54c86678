// Run-length mask coding, matching the service: row-major runs that
// alternate zero/one and always start with the zero run (possibly empty).

export interface RleMask {
  size: [number, number]; // [height, width]
  runs: number[];
}

export function maskToRle(mask: Uint8Array, height: number, width: number): RleMask {
  if (mask.length !== height * width) {
    throw new Error(`mask has ${mask.length} pixels, size says ${height * width}`);
  }
  const runs: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === value) {
      run++;
    } else {
      runs.push(run);
      value = v;
      run = 1;
    }
  }
  runs.push(run);
  return { size: [height, width], runs };
}

export function rleToMask(rle: RleMask): { height: number; width: number; mask: Uint8Array } {
  const [height, width] = rle.size;
  if (!Number.isInteger(height) || !Number.isInteger(width) || height < 1 || width < 1) {
    throw new Error(`bad mask size ${rle.size}`);
  }
  const total = height * width;
  const mask = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.runs) {
    if (!Number.isInteger(run) || run < 0) throw new Error(`bad run length ${run}`);
    if (pos + run > total) throw new Error("runs overrun the canvas");
    if (value) mask.fill(1, pos, pos + run);
    pos += run;
    value = 1 - value;
  }
  if (pos !== total) throw new Error(`runs cover ${pos} pixels, canvas has ${total}`);
  return { height, width, mask };
}

export function masksEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if ((a[i] ? 1 : 0) !== (b[i] ? 1 : 0)) return false;
  }
  return true;
}
