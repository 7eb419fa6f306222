"""Minimal reverse-mode autodiff used by both neural filters."""

from .tensor import (Tensor, add, as_tensor, backward, clip, complex_matmul, complex_mul, concat, div,
                     exp, getitem, log, matmul, mean, mul, neg, no_grad, overlap_add, pad_last, reshape,
                     sigmoid, slice_, sqrt, square, stack, sub, sum_, swapaxes, tanh, transpose)
from .recurrent import (bilstm_layer, cgru_layer, cgru_scan, gru_cell_complex, init_cgru, init_lstm,
                        lstm_cell, lstm_layer, lstm_scan, modrelu, scan_precision, split_sigmoid, split_tanh)
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import max_relative_error, numerical_grad
