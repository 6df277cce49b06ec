/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const alpha_star_curve: (a: number, b: number) => [number, number, number, number];
export const context_lengths: () => [number, number];
export const icl_error_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const landscape: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
