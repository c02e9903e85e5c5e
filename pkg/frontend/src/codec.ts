// Binary volume / label-mask formats, mirrored from the service docs:
// volume = "TISVOL1" + u32le X Y Z + u32le dtype tag 0 + float32le voxels,
// labels = "TISLBL1" + u32le X Y Z + u32le categories + u8 voxels.
// Voxels are x-fastest: linear index i = x + X*(y + Y*z).

export type Extents = readonly [number, number, number];

export interface Volume {
  extents: Extents;
  voxels: Float32Array;
}

export interface Labels {
  extents: Extents;
  categories: number;
  voxels: Uint8Array;
}

export class CodecError extends Error {}

const VOL_MAGIC = "TISVOL1";
const LBL_MAGIC = "TISLBL1";
const HEADER = 7 + 16; // magic + four u32

function checkMagic(bytes: Uint8Array, magic: string, what: string): void {
  if (bytes.length < HEADER) {
    throw new CodecError(`truncated ${what} header`);
  }
  for (let i = 0; i < magic.length; i++) {
    if (bytes[i] !== magic.charCodeAt(i)) {
      throw new CodecError(`bad ${what} magic`);
    }
  }
}

function readHeader(bytes: Uint8Array): [number, number, number, number] {
  const dv = new DataView(bytes.buffer, bytes.byteOffset + 7, 16);
  return [
    dv.getUint32(0, true),
    dv.getUint32(4, true),
    dv.getUint32(8, true),
    dv.getUint32(12, true),
  ];
}

export function voxelCount(extents: Extents): number {
  return extents[0] * extents[1] * extents[2];
}

export function parseVolume(bytes: Uint8Array): Volume {
  checkMagic(bytes, VOL_MAGIC, "volume");
  const [x, y, z, tag] = readHeader(bytes);
  if (tag !== 0) {
    throw new CodecError(`unknown volume dtype tag ${tag}`);
  }
  const extents: Extents = [x, y, z];
  if (bytes.length !== HEADER + 4 * voxelCount(extents)) {
    throw new CodecError("volume payload size mismatch");
  }
  // copy out of the blob so the typed array is tight and aligned
  const payload = bytes.slice(HEADER);
  const voxels = new Float32Array(payload.buffer, 0, voxelCount(extents));
  return { extents, voxels };
}

export function parseLabels(bytes: Uint8Array): Labels {
  checkMagic(bytes, LBL_MAGIC, "label");
  const [x, y, z, categories] = readHeader(bytes);
  const extents: Extents = [x, y, z];
  if (bytes.length !== HEADER + voxelCount(extents)) {
    throw new CodecError("label payload size mismatch");
  }
  if (categories < 1 || categories > 256) {
    throw new CodecError(`category count out of range: ${categories}`);
  }
  const voxels = bytes.slice(HEADER);
  for (let i = 0; i < voxels.length; i++) {
    const v = voxels[i]!;
    if (v >= categories) {
      throw new CodecError(`label ${v} exceeds category count ${categories}`);
    }
  }
  return { extents, categories, voxels };
}

function packHeader(magic: string, a: number, b: number, c: number, d: number,
                    payload: number) {
  const out = new Uint8Array(HEADER + payload);
  for (let i = 0; i < magic.length; i++) {
    out[i] = magic.charCodeAt(i);
  }
  const dv = new DataView(out.buffer, 7, 16);
  dv.setUint32(0, a, true);
  dv.setUint32(4, b, true);
  dv.setUint32(8, c, true);
  dv.setUint32(12, d, true);
  return out;
}

export function volumeBytes(vol: Volume) {
  const [x, y, z] = vol.extents;
  const out = packHeader(VOL_MAGIC, x, y, z, 0, 4 * vol.voxels.length);
  out.set(new Uint8Array(vol.voxels.buffer, vol.voxels.byteOffset,
                         4 * vol.voxels.length), HEADER);
  return out;
}

export function labelBytes(mask: Labels) {
  const [x, y, z] = mask.extents;
  const out = packHeader(LBL_MAGIC, x, y, z, mask.categories, mask.voxels.length);
  out.set(mask.voxels, HEADER);
  return out;
}

// The service's mask_sha256 digests the label array C-contiguous (z
// fastest), while files store voxels x fastest; permute before hashing.
export function cOrderBytes(mask: Labels) {
  const [X, Y, Z] = mask.extents;
  const out = new Uint8Array(mask.voxels.length);
  let o = 0;
  for (let x = 0; x < X; x++) {
    for (let y = 0; y < Y; y++) {
      for (let z = 0; z < Z; z++) {
        out[o++] = mask.voxels[x + X * (y + Y * z)]!;
      }
    }
  }
  return out;
}

// base64 helpers; chunked so large payloads stay under argument limits
export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export function fromBase64(text: string) {
  const binary = atob(text);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}
