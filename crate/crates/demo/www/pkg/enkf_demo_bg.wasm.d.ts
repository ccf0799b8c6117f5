/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_twinrun_free: (a: number, b: number) => void;
export const potential_trace: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
export const taper_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const twinrun_advance: (a: number, b: number) => number;
export const twinrun_analysis_rmse: (a: number) => [number, number];
export const twinrun_cycles: (a: number) => number;
export const twinrun_failure: (a: number) => [number, number];
export const twinrun_forecast_rmse: (a: number) => [number, number];
export const twinrun_mean: (a: number) => [number, number];
export const twinrun_member_count: (a: number) => number;
export const twinrun_members: (a: number) => [number, number];
export const twinrun_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const twinrun_observed_indices: (a: number) => [number, number];
export const twinrun_truth: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
