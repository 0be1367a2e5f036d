from .rle import decode_index_runs, decode_mask, encode_index_runs, encode_mask

__all__ = ["decode_index_runs", "decode_mask", "encode_index_runs", "encode_mask"]
