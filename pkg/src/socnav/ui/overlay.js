/**
 * Reward-map heat overlay.
 *
 * Consumes the exact grid text served by the service (the same bytes
 * `export-reward-map` writes), parses it, and rasterizes a bilinear
 * color-mapped layer in world coordinates.
 */
export const GRID_MAGIC = "socnav-reward-grid";
export const GRID_VERSION = 1;
export class GridParseError extends Error {
}
export function parseRewardGrid(text) {
    const lines = text.split("\n");
    if (lines.length < 5 || !lines[0].startsWith(`# ${GRID_MAGIC} `)) {
        throw new GridParseError("not a reward grid file");
    }
    const version = Number(lines[0].split(" ").pop());
    if (version !== GRID_VERSION) {
        throw new GridParseError(`unsupported reward grid version ${version}`);
    }
    const xHeader = lines[1].split(" ");
    const yHeader = lines[2].split(" ");
    if (xHeader[1] !== "x" || yHeader[1] !== "y") {
        throw new GridParseError("missing axis headers");
    }
    const [xMin, xMax, nx] = [Number(xHeader[2]), Number(xHeader[3]), Number(xHeader[4])];
    const [yMin, yMax, ny] = [Number(yHeader[2]), Number(yHeader[3]), Number(yHeader[4])];
    const fixed = lines[3].split(" ").slice(2).filter(Boolean).map(Number);
    const values = [];
    for (const line of lines.slice(4)) {
        if (!line)
            continue;
        values.push(line.split("\t").map(Number));
    }
    if (!Number.isInteger(nx) ||
        !Number.isInteger(ny) ||
        values.length !== ny ||
        values.some((row) => row.length !== nx || row.some((v) => !Number.isFinite(v)))) {
        throw new GridParseError("grid payload does not match declared shape");
    }
    return { xMin, xMax, nx, yMin, yMax, ny, fixed, values };
}
/**
 * Bilinear sample at world coordinates; points outside the grid clamp to
 * the border cell.
 */
export function sampleGrid(grid, x, y) {
    const fx = ((x - grid.xMin) / (grid.xMax - grid.xMin)) * (grid.nx - 1);
    const fy = ((y - grid.yMin) / (grid.yMax - grid.yMin)) * (grid.ny - 1);
    const cx = Math.min(Math.max(fx, 0), grid.nx - 1);
    const cy = Math.min(Math.max(fy, 0), grid.ny - 1);
    const x0 = Math.min(Math.floor(cx), grid.nx - 2);
    const y0 = Math.min(Math.floor(cy), grid.ny - 2);
    const tx = cx - x0;
    const ty = cy - y0;
    const v00 = grid.values[y0][x0];
    const v01 = grid.values[y0][x0 + 1];
    const v10 = grid.values[y0 + 1][x0];
    const v11 = grid.values[y0 + 1][x0 + 1];
    return (v00 * (1 - tx) * (1 - ty) +
        v01 * tx * (1 - ty) +
        v10 * (1 - tx) * ty +
        v11 * tx * ty);
}
/** Diverging blue-white-red map over [-1, 1]; 0 is the mid color. */
export function heatColor(t) {
    const c = Math.min(1, Math.max(-1, t));
    if (c >= 0) {
        // white -> red
        return [255, Math.round(255 * (1 - c)), Math.round(255 * (1 - c))];
    }
    // white -> blue
    return [Math.round(255 * (1 + c)), Math.round(255 * (1 + c)), 255];
}
/**
 * Rasterize the overlay into an RGBA buffer covering the world rectangle
 * [xMin, xMax] x [yMin, yMax] at `width` x `height` pixels. Values are
 * normalized symmetrically around zero by the grid's largest magnitude, so
 * the constant-zero grid renders as a uniform mid color. Pixel row 0 is the
 * top of the canvas (largest y).
 */
export function rasterizeOverlay(grid, width, height, alpha) {
    let peak = 0;
    for (const row of grid.values) {
        for (const v of row)
            peak = Math.max(peak, Math.abs(v));
    }
    const scale = peak > 0 ? 1 / peak : 1;
    const data = new Uint8ClampedArray(width * height * 4);
    const a = Math.round(255 * Math.min(1, Math.max(0, alpha)));
    for (let py = 0; py < height; py++) {
        const wy = grid.yMax - ((py + 0.5) / height) * (grid.yMax - grid.yMin);
        for (let px = 0; px < width; px++) {
            const wx = grid.xMin + ((px + 0.5) / width) * (grid.xMax - grid.xMin);
            const [r, g, b] = heatColor(sampleGrid(grid, wx, wy) * scale);
            const i = (py * width + px) * 4;
            data[i] = r;
            data[i + 1] = g;
            data[i + 2] = b;
            data[i + 3] = a;
        }
    }
    return { width, height, data };
}
