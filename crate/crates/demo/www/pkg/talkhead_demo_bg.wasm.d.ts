/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_facerig_free: (a: number, b: number) => void;
export const compare_tracks: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const facerig_fit: (a: number, b: bigint, c: number, d: number) => [number, number, number, number];
export const facerig_new: (a: number) => number;
export const facerig_render: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const slider_names: () => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
