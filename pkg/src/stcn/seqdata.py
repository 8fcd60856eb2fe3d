"""Sequence datasets: synthetic generators, binary container I/O, batching."""

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"STCNSEQ1"

# "switching" preset constants. Each segment draws a discrete regime whose
# mean is one of SWITCHING_MEANS; every step mixes two shared N(0,1) factors
# into all channels (a dominant same-sign loading plus a weaker
# alternating-sign one) and adds a small per-channel jitter. The per-step
# marginal at segment boundaries is bimodal, and within a regime the channels
# stay strongly correlated in a way no diagonal density captures, while the
# noise itself spans two dimensions.
SWITCHING_SEGMENT = 8
SWITCHING_MEANS = (-3.0, 3.0)
SWITCHING_MAJOR_LOADING = 0.8  # shared factor, same sign in every channel
SWITCHING_MINOR_LOADING = 0.2  # shared factor, sign alternates per channel
SWITCHING_CHANNEL_STD = 0.1
# marginal std of one channel around its regime mean
SWITCHING_MODE_STD = (
    SWITCHING_MAJOR_LOADING**2 + SWITCHING_MINOR_LOADING**2 + SWITCHING_CHANNEL_STD**2
) ** 0.5


class ContainerFormatError(ValueError):
    """Raised when a sequence container file is malformed."""


@dataclass
class SequenceSet:
    """A collection of variable-length [T_i x D] float32 sequences."""

    sequences: list
    feature_dim: int
    name: str = None

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        seqs = []
        for i, s in enumerate(self.sequences):
            a = np.asarray(s, dtype=np.float32)
            if a.ndim != 2 or a.shape[1] != self.feature_dim:
                raise ValueError(
                    f"sequence {i} has shape {a.shape}, expected [T, {self.feature_dim}]"
                )
            if a.shape[0] < 1:
                raise ValueError(f"sequence {i} is empty")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"sequence {i} contains non-finite values")
            seqs.append(a)
        self.sequences = seqs

    def __len__(self):
        return len(self.sequences)

    def __eq__(self, other):
        if not isinstance(other, SequenceSet):
            return NotImplemented
        return (
            self.feature_dim == other.feature_dim
            and len(self.sequences) == len(other.sequences)
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for a, b in zip(self.sequences, other.sequences)
            )
        )


@dataclass
class SequenceBatch:
    """Zero-padded batch: data [B x T_max x D], mask [B x T_max] in {0,1}."""

    data: np.ndarray
    mask: np.ndarray
    lengths: list


def generate_synthetic(preset, n, T, D, seed):
    """Generate a deterministic synthetic SequenceSet.

    Presets: "sines" (smooth noisy sinusoids), "switching" (segment-wise
    regime switches with shared per-step noise; multi-modal marginals),
    "strokes" (pen-offset-like smooth delta channels).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if T < 2:
        raise ValueError("T must be >= 2")
    if D < 1:
        raise ValueError("D must be >= 1")
    rng = np.random.default_rng(seed)
    if preset == "sines":
        seqs = _gen_sines(rng, n, T, D)
    elif preset == "switching":
        seqs = _gen_switching(rng, n, T, D)
    elif preset == "strokes":
        seqs = _gen_strokes(rng, n, T, D)
    else:
        raise ValueError(f"unknown preset {preset!r}")
    return SequenceSet(seqs, feature_dim=D, name=f"{preset}-n{n}-T{T}-D{D}-s{seed}")


def _gen_sines(rng, n, T, D):
    t = np.arange(T)[:, None]
    seqs = []
    for _ in range(n):
        amp = rng.uniform(0.5, 1.5, size=(1, D))
        freq = rng.uniform(0.05, 0.25, size=(1, D))
        phase = rng.uniform(0, 2 * np.pi, size=(1, D))
        x = amp * np.sin(2 * np.pi * freq * t + phase)
        x += 0.05 * rng.standard_normal((T, D))
        seqs.append(x.astype(np.float32))
    return seqs


def _gen_switching(rng, n, T, D):
    seqs = []
    n_seg = (T + SWITCHING_SEGMENT - 1) // SWITCHING_SEGMENT
    means = np.asarray(SWITCHING_MEANS)
    signs = np.where(np.arange(D) % 2 == 0, 1.0, -1.0)
    for _ in range(n):
        regimes = rng.integers(0, len(means), size=n_seg)
        mean_t = np.repeat(means[regimes], SWITCHING_SEGMENT)[:T]
        f1 = rng.standard_normal(T)[:, None]
        f2 = rng.standard_normal(T)[:, None]
        shared = SWITCHING_MAJOR_LOADING * f1 + SWITCHING_MINOR_LOADING * signs[None, :] * f2
        x = mean_t[:, None] + shared + SWITCHING_CHANNEL_STD * rng.standard_normal((T, D))
        seqs.append(x.astype(np.float32))
    return seqs


def _gen_strokes(rng, n, T, D):
    # Smooth heading random walk; channels come in (dx, dy) pairs.
    seqs = []
    for _ in range(n):
        x = np.empty((T, D))
        for d0 in range(0, D, 2):
            theta = np.cumsum(0.3 * rng.standard_normal(T))
            speed = 0.5 + 0.2 * np.abs(rng.standard_normal(T))
            x[:, d0] = speed * np.cos(theta)
            if d0 + 1 < D:
                x[:, d0 + 1] = speed * np.sin(theta)
        x += 0.02 * rng.standard_normal((T, D))
        seqs.append(x.astype(np.float32))
    return seqs


def write_container(seq_set, path):
    """Write a SequenceSet to the binary container format (float32 LE)."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(seq_set.sequences)))
        for s in seq_set.sequences:
            T, D = s.shape
            f.write(struct.pack("<II", T, D))
            f.write(s.astype("<f4").tobytes(order="C"))


def read_container(path):
    """Read a SequenceSet from the binary container format."""
    with open(path, "rb") as f:
        blob = f.read()
    off = 0
    if blob[:8] != MAGIC:
        raise ContainerFormatError(f"bad magic at offset 0: {blob[:8]!r}")
    off = 8
    if len(blob) < off + 4:
        raise ContainerFormatError(f"truncated sequence count at offset {off}")
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    seqs = []
    feature_dim = None
    for i in range(count):
        if len(blob) < off + 8:
            raise ContainerFormatError(f"truncated header of record {i} at offset {off}")
        T, D = struct.unpack_from("<II", blob, off)
        off += 8
        if T < 1 or D < 1:
            raise ContainerFormatError(f"invalid dims T={T} D={D} in record {i} at offset {off - 8}")
        if feature_dim is None:
            feature_dim = D
        elif D != feature_dim:
            raise ContainerFormatError(
                f"feature dim mismatch in record {i} at offset {off - 4}: {D} != {feature_dim}"
            )
        nbytes = 4 * T * D
        if len(blob) < off + nbytes:
            raise ContainerFormatError(f"truncated payload of record {i} at offset {off}")
        a = np.frombuffer(blob, dtype="<f4", count=T * D, offset=off).reshape(T, D)
        seqs.append(a.copy())
        off += nbytes
    if off != len(blob):
        raise ContainerFormatError(f"trailing bytes after record {count - 1} at offset {off}")
    return SequenceSet(seqs, feature_dim=feature_dim)


def make_batches(seq_set, batch_size, shuffle_seed=None):
    """Split a SequenceSet into zero-padded SequenceBatch objects."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(seq_set) == 0:
        raise ValueError("cannot batch an empty SequenceSet")
    order = np.arange(len(seq_set))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        seqs = [seq_set.sequences[i] for i in idx]
        lengths = [s.shape[0] for s in seqs]
        t_max = max(lengths)
        data = np.zeros((len(seqs), t_max, seq_set.feature_dim), dtype=np.float32)
        mask = np.zeros((len(seqs), t_max), dtype=np.float32)
        for b, s in enumerate(seqs):
            data[b, : s.shape[0]] = s
            mask[b, : s.shape[0]] = 1.0
        batches.append(SequenceBatch(data=data, mask=mask, lengths=lengths))
    return batches
