"""Padded-batch assembly from prepared instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    ids: list[str]
    tok: np.ndarray          # (B, T) int64, PAD=0
    mask: np.ndarray         # (B, T) 0/1
    pos: np.ndarray          # (B, T) position weights, 0 at pads
    asp: np.ndarray          # (B, N) int64
    amask: np.ndarray        # (B, N)
    adj: np.ndarray          # (B, T, T)
    aspect_token_mask: np.ndarray  # (B, T) 1 inside the aspect span
    k_sent: np.ndarray       # (B, T, d_k)
    k_asp: np.ndarray        # (B, N, d_k)
    gold: np.ndarray         # (B,) int64
    lengths: np.ndarray      # (B,) sentence lengths
    aspect_lengths: np.ndarray

    def __len__(self):
        return len(self.ids)


def collate(instances, dtype, position: bool = True) -> Batch:
    """Pad a list of prepared instances into one batch.

    Instances must expose: id, token_ids, aspect_ids, aspect_start,
    aspect_len, polarity, pos_weights, adjacency, k_sent, k_asp.
    """
    bsz = len(instances)
    T = max(len(x.token_ids) for x in instances)
    N = max(len(x.aspect_ids) for x in instances)
    d_k = instances[0].k_sent.shape[1]

    tok = np.zeros((bsz, T), dtype=np.int64)
    mask = np.zeros((bsz, T), dtype=dtype)
    pos = np.zeros((bsz, T), dtype=dtype)
    asp = np.zeros((bsz, N), dtype=np.int64)
    amask = np.zeros((bsz, N), dtype=dtype)
    adj = np.zeros((bsz, T, T), dtype=dtype)
    aspect_token_mask = np.zeros((bsz, T), dtype=dtype)
    k_sent = np.zeros((bsz, T, d_k), dtype=dtype)
    k_asp = np.zeros((bsz, N, d_k), dtype=dtype)
    gold = np.empty(bsz, dtype=np.int64)
    lengths = np.empty(bsz, dtype=np.int64)
    aspect_lengths = np.empty(bsz, dtype=np.int64)

    for i, x in enumerate(instances):
        m, n = len(x.token_ids), len(x.aspect_ids)
        tok[i, :m] = x.token_ids
        mask[i, :m] = 1.0
        pos[i, :m] = x.pos_weights if position else 1.0
        asp[i, :n] = x.aspect_ids
        amask[i, :n] = 1.0
        adj[i, :m, :m] = x.adjacency
        aspect_token_mask[i, x.aspect_start : x.aspect_start + x.aspect_len] = 1.0
        k_sent[i, :m] = x.k_sent
        k_asp[i, :n] = x.k_asp
        gold[i] = x.polarity
        lengths[i] = m
        aspect_lengths[i] = n

    return Batch(
        ids=[x.id for x in instances], tok=tok, mask=mask, pos=pos, asp=asp,
        amask=amask, adj=adj, aspect_token_mask=aspect_token_mask,
        k_sent=k_sent, k_asp=k_asp, gold=gold, lengths=lengths,
        aspect_lengths=aspect_lengths,
    )
