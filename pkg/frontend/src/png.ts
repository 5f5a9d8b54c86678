// Minimal 8-bit grayscale PNG codec for the mask upload path. Encoding
// wraps the raw scanlines in stored (uncompressed) deflate blocks, which
// every PNG reader accepts; the decoder handles exactly such streams and
// rejects anything it cannot reproduce bit-for-bit.

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

let crcTable: Uint32Array | undefined;

export function crc32(bytes: Uint8Array, start = 0, end = bytes.length): number {
  if (!crcTable) {
    crcTable = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
      let c = n;
      for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      crcTable[n] = c >>> 0;
    }
  }
  let crc = 0xffffffff;
  for (let i = start; i < end; i++) {
    crc = crcTable[(crc ^ bytes[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a += bytes[i];
    b += a;
    if ((i & 0xfff) === 0xfff) {
      a %= 65521;
      b %= 65521;
    }
  }
  return (((b % 65521) << 16) | (a % 65521)) >>> 0;
}

function u32be(value: number): number[] {
  return [(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff];
}

function readU32(bytes: Uint8Array, pos: number): number {
  return ((bytes[pos] << 24) | (bytes[pos + 1] << 16) | (bytes[pos + 2] << 8) | bytes[pos + 3]) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  out.set(u32be(data.length), 0);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(data, 8);
  out.set(u32be(crc32(out, 4, 8 + data.length)), 8 + data.length);
  return out;
}

function concatBytes(parts: Uint8Array[]): Uint8Array {
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

export function encodeGrayPng(width: number, height: number, pixels: Uint8Array): Uint8Array {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad dimensions ${width}x${height}`);
  }
  if (pixels.length !== width * height) {
    throw new Error(`expected ${width * height} pixels, got ${pixels.length}`);
  }
  // one filter byte (0 = none) ahead of every scanline
  const raw = new Uint8Array((width + 1) * height);
  for (let y = 0; y < height; y++) {
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }

  const zparts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  for (let off = 0; off < raw.length; off += 65535) {
    const len = Math.min(65535, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    zparts.push(new Uint8Array([final, len & 0xff, len >>> 8, ~len & 0xff, (~len >>> 8) & 0xff]));
    zparts.push(raw.subarray(off, off + len));
  }
  zparts.push(new Uint8Array(u32be(adler32(raw))));

  const ihdr = new Uint8Array([...u32be(width), ...u32be(height), 8, 0, 0, 0, 0]);
  return concatBytes([
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", concatBytes(zparts)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

function inflateStored(z: Uint8Array): Uint8Array {
  if (z.length < 7) throw new Error("zlib stream too short");
  if ((z[0] & 0x0f) !== 8) throw new Error("not a deflate stream");
  if (((z[0] << 8) | z[1]) % 31 !== 0) throw new Error("corrupt zlib header");
  if (z[1] & 0x20) throw new Error("preset dictionary not supported");
  const parts: Uint8Array[] = [];
  let pos = 2;
  let final = 0;
  do {
    if (pos + 5 > z.length) throw new Error("truncated deflate block");
    const header = z[pos];
    final = header & 1;
    if ((header >>> 1) & 3) {
      throw new Error("compressed deflate blocks not supported, expected stored");
    }
    const len = z[pos + 1] | (z[pos + 2] << 8);
    const nlen = z[pos + 3] | (z[pos + 4] << 8);
    if ((len ^ nlen) !== 0xffff) throw new Error("stored block length check failed");
    pos += 5;
    if (pos + len + 4 > z.length) throw new Error("stored block overruns stream");
    parts.push(z.subarray(pos, pos + len));
    pos += len;
  } while (!final);
  const raw = concatBytes(parts);
  if (adler32(raw) !== readU32(z, pos)) throw new Error("zlib checksum mismatch");
  return raw;
}

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let width = 0;
  let height = 0;
  let sawHeader = false;
  let sawEnd = false;
  const idat: Uint8Array[] = [];
  let pos = 8;
  while (pos < bytes.length) {
    if (pos + 12 > bytes.length) throw new Error("truncated chunk");
    const len = readU32(bytes, pos);
    const type = String.fromCharCode(bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]);
    const dataStart = pos + 8;
    if (dataStart + len + 4 > bytes.length) throw new Error("truncated chunk");
    if (crc32(bytes, pos + 4, dataStart + len) !== readU32(bytes, dataStart + len)) {
      throw new Error(`bad CRC in ${type} chunk`);
    }
    if (type === "IHDR") {
      width = readU32(bytes, dataStart);
      height = readU32(bytes, dataStart + 4);
      if (bytes[dataStart + 8] !== 8 || bytes[dataStart + 9] !== 0) {
        throw new Error("only 8-bit grayscale supported");
      }
      if (bytes[dataStart + 12] !== 0) throw new Error("interlaced PNG not supported");
      sawHeader = true;
    } else if (type === "IDAT") {
      idat.push(bytes.subarray(dataStart, dataStart + len));
    } else if (type === "IEND") {
      sawEnd = true;
      break;
    }
    pos = dataStart + len + 4;
  }
  if (!sawHeader || !sawEnd) throw new Error("missing IHDR or IEND");
  const raw = inflateStored(concatBytes(idat));
  if (raw.length !== (width + 1) * height) throw new Error("decompressed size mismatch");
  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("only filter type 0 supported");
    pixels.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, pixels };
}

// Binary-mask views of the same wire format. The threshold mirrors the
// server: a pixel at or above 128 selects the token.

export function maskToPng(mask: Uint8Array, width: number, height: number): Uint8Array {
  const px = new Uint8Array(mask.length);
  for (let i = 0; i < mask.length; i++) px[i] = mask[i] ? 255 : 0;
  return encodeGrayPng(width, height, px);
}

export function pngToMask(bytes: Uint8Array): { width: number; height: number; mask: Uint8Array } {
  const img = decodeGrayPng(bytes);
  const mask = new Uint8Array(img.pixels.length);
  for (let i = 0; i < img.pixels.length; i++) mask[i] = img.pixels[i] >= 128 ? 1 : 0;
  return { width: img.width, height: img.height, mask };
}
