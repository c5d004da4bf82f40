/* tslint:disable */
/* eslint-disable */

export class FaceRig {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Runs a landmark fit; returns `[error_px, iterations, F_0, F_1, ...]`.
     */
    fit(seed: bigint, keyframes: number, max_iters: number): Float64Array;
    constructor(size: number);
    render(expr: Float64Array, head: Float64Array): Uint8Array;
}

/**
 * Returns `[l1, ssim_loss, ref_0.., pred_0..]` for `frames` frames.
 */
export function compare_tracks(frames: number, offset: number, scale: number, shift: number): Float64Array;

export function slider_names(): string[];

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_facerig_free: (a: number, b: number) => void;
    readonly compare_tracks: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly facerig_fit: (a: number, b: bigint, c: number, d: number) => [number, number, number, number];
    readonly facerig_new: (a: number) => number;
    readonly facerig_render: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly slider_names: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
