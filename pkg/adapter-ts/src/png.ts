/** PNG decode/encode to the flat RGB raster used by the kernels. */

import fs from "node:fs";
import { PNG } from "pngjs";
import { RgbImage } from "./kernels.js";

export function readPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const n = png.width * png.height;
  const data = new Uint8Array(3 * n);
  for (let p = 0; p < n; p++) {
    data[3 * p] = png.data[4 * p];
    data[3 * p + 1] = png.data[4 * p + 1];
    data[3 * p + 2] = png.data[4 * p + 2];
  }
  return { width: png.width, height: png.height, data };
}

export function writePng(img: RgbImage, path: string): void {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let p = 0; p < n; p++) {
    png.data[4 * p] = img.data[3 * p];
    png.data[4 * p + 1] = img.data[3 * p + 1];
    png.data[4 * p + 2] = img.data[3 * p + 2];
    png.data[4 * p + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}
