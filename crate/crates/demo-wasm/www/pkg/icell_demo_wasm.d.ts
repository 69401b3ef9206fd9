/* tslint:disable */
/* eslint-disable */

/**
 * Bright-field field of view with `count` droplets, as RGBA.
 */
export function brightfield_scene(seed: number, count: number, noise: number): Uint8Array;

/**
 * Detect droplets against the frame's median background.
 *
 * Returns rows of `[cx, cy, diameter_px, circularity]`.
 */
export function detect_droplets(rgba: Uint8Array, width: number, height: number): Float64Array;

/**
 * Fluorescence field with `live` green and `dead` red cells, as RGBA.
 */
export function fluorescence_scene(seed: number, live: number, dead: number): Uint8Array;

/**
 * Score cells with the default green/red bands.
 *
 * Returns `[live, dead, ambiguous, field_ratio]`, the ratio NaN when no
 * cell carries signal, followed by rows of `[cx, cy, circularity, class]`
 * with class 0 live, 1 dead, 2 ambiguous.
 */
export function live_dead(rgba: Uint8Array, width: number, height: number): Float64Array;

/**
 * Measure painted blobs: any nonzero byte in `mask` is foreground.
 *
 * Returns rows of `[cx, cy, area, perimeter, circularity]`.
 */
export function shape_metrics(mask: Uint8Array, width: number, height: number): Float64Array;

/**
 * Remap channels, e.g. "GRB" swaps red and green. Returns RGBA.
 */
export function transfer_channels(rgba: Uint8Array, width: number, height: number, map: string): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly brightfield_scene: (a: number, b: number, c: number) => [number, number, number, number];
    readonly detect_droplets: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly fluorescence_scene: (a: number, b: number, c: number) => [number, number, number, number];
    readonly live_dead: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly shape_metrics: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly transfer_channels: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
