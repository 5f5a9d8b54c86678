import { describe, expect, it } from "vitest";
import { BrushMask, overlayPixels } from "../src/brush";

function grid(mask: BrushMask): number[][] {
  const rows: number[][] = [];
  for (let y = 0; y < mask.height; y++) {
    rows.push([...mask.data.subarray(y * mask.width, (y + 1) * mask.width)]);
  }
  return rows;
}

describe("stamp", () => {
  it("fills exactly the pixels whose centers fall inside the circle", () => {
    const m = new BrushMask(4, 4);
    m.stamp(2, 2, 1.2);
    expect(grid(m)).toEqual([
      [0, 0, 0, 0],
      [0, 1, 1, 0],
      [0, 1, 1, 0],
      [0, 0, 0, 0],
    ]);
  });

  it("is symmetric around an on-grid center", () => {
    const m = new BrushMask(15, 15);
    m.stamp(7.5, 7.5, 4.2);
    const g = grid(m);
    for (let y = 0; y < 15; y++) {
      for (let x = 0; x < 15; x++) {
        expect(g[y][x]).toBe(g[14 - y][x]);
        expect(g[y][x]).toBe(g[y][14 - x]);
      }
    }
    expect(m.count()).toBeGreaterThan(0);
  });

  it("larger radii strictly contain smaller ones", () => {
    const small = new BrushMask(20, 20);
    const large = new BrushMask(20, 20);
    small.stamp(9.3, 10.1, 3);
    large.stamp(9.3, 10.1, 6);
    for (let i = 0; i < small.data.length; i++) {
      if (small.data[i]) expect(large.data[i]).toBe(1);
    }
    expect(large.count()).toBeGreaterThan(small.count());
  });

  it("clips at the borders without wrapping", () => {
    const m = new BrushMask(6, 6);
    m.stamp(0, 0, 2.5);
    const g = grid(m);
    expect(g[0][0]).toBe(1);
    expect(g[5][5]).toBe(0);
    expect(g[0][5]).toBe(0); // a wrap bug would light the far edge
    expect(g[5][0]).toBe(0);
  });
});

describe("line", () => {
  it("covers both endpoints and leaves no gaps along the sweep", () => {
    const m = new BrushMask(40, 40);
    m.line(3.2, 5.7, 34.8, 30.1, 1.5);
    const byStamps = new BrushMask(40, 40);
    byStamps.stamp(3.2, 5.7, 1.5);
    byStamps.stamp(34.8, 30.1, 1.5);
    for (let i = 0; i < byStamps.data.length; i++) {
      if (byStamps.data[i]) expect(m.data[i]).toBe(1);
    }
    // every filled pixel row between the endpoints must be connected to
    // its neighbors: scan for an all-zero column strip crossing the path
    for (let x = 5; x < 34; x++) {
      let hit = 0;
      for (let y = 0; y < 40; y++) hit += m.data[y * 40 + x];
      expect(hit).toBeGreaterThan(0);
    }
  });

  it("degenerates to a stamp when both endpoints coincide", () => {
    const a = new BrushMask(10, 10);
    const b = new BrushMask(10, 10);
    a.line(4.4, 6.1, 4.4, 6.1, 2);
    b.stamp(4.4, 6.1, 2);
    expect([...a.data]).toEqual([...b.data]);
  });
});

describe("mask bookkeeping", () => {
  it("clear empties the buffer and count tracks filled pixels", () => {
    const m = new BrushMask(8, 8);
    expect(m.count()).toBe(0);
    m.stamp(4, 4, 2);
    expect(m.count()).toBeGreaterThan(0);
    m.clear();
    expect(m.count()).toBe(0);
    expect([...m.data]).toEqual(new Array(64).fill(0));
  });
});

describe("overlayPixels", () => {
  it("is opaque exactly where the mask is set", () => {
    const mask = new Uint8Array([0, 1, 1, 0, 1, 0]);
    const rgba = overlayPixels(mask, [10, 20, 30, 200]);
    for (let i = 0; i < mask.length; i++) {
      expect(rgba[i * 4 + 3] > 0).toBe(mask[i] === 1);
      if (mask[i]) {
        expect([rgba[i * 4], rgba[i * 4 + 1], rgba[i * 4 + 2]]).toEqual([10, 20, 30]);
      }
    }
  });
});
