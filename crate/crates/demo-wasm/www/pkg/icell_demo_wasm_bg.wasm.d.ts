/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const brightfield_scene: (a: number, b: number, c: number) => [number, number, number, number];
export const detect_droplets: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const fluorescence_scene: (a: number, b: number, c: number) => [number, number, number, number];
export const live_dead: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const shape_metrics: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const transfer_channels: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
