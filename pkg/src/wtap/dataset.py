"""Dataset generation, storage, and composition.

Files are binary: a fixed header (magic "WTDS") followed by one record
per sample. Each record carries its own receiver/eavesdropper antenna
counts so cascaded (mixed-setting) files stay self-describing; the
header keeps n_r = n_e = 0 as the mixed-setting sentinel. All floats are
little-endian IEEE-754 doubles.

Generation is deterministic per (seed, parameters): sample i draws its
channel from a generator seeded by SeedSequence(seed, spawn_key=(i,)),
so the output is byte-identical no matter how many workers label it.
"""

import csv
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, DataFormatError
from .features import cov_length, encode_cov, encode_features, feature_length
from .secrecy import ChannelPair
from .solvers import SolverConfig, solve_covariance_pg

MAGIC = b"WTDS"
VERSION = 1
FLAG_NONCONVERGED = 0x01

_HEADER_FMT = "<4sIQIIIdq"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_REC_DIMS_FMT = "<II"


@dataclass(frozen=True)
class DatasetHeader:
    sample_count: int
    n_t: int
    n_r: int          # 0 when the file mixes antenna settings
    n_e: int
    P: float
    seed: int

    @property
    def mixed(self):
        return self.n_r == 0 or self.n_e == 0


@dataclass(frozen=True)
class DatasetRecord:
    """One labeled sample: raw channels, encoded feature/target vectors,
    and the oracle's achieved rate."""

    H: np.ndarray
    G: np.ndarray
    v: np.ndarray
    q: np.ndarray
    P: float
    rate: float
    flags: int

    @property
    def n_t(self):
        return self.H.shape[1]

    @property
    def n_r(self):
        return self.H.shape[0]

    @property
    def n_e(self):
        return self.G.shape[0]

    @property
    def channel(self):
        return ChannelPair(self.H, self.G)

    @property
    def converged(self):
        return not (self.flags & FLAG_NONCONVERGED)


def _pack_header(h):
    return struct.pack(
        _HEADER_FMT, MAGIC, VERSION, h.sample_count, h.n_t, h.n_r, h.n_e, h.P, h.seed
    )


def _pack_record(n_t, H, G, v, q, rate, flags):
    return b"".join([
        struct.pack(_REC_DIMS_FMT, H.shape[0], G.shape[0]),
        np.ascontiguousarray(H, dtype="<f8").tobytes(),
        np.ascontiguousarray(G, dtype="<f8").tobytes(),
        np.ascontiguousarray(v, dtype="<f8").tobytes(),
        np.ascontiguousarray(q, dtype="<f8").tobytes(),
        struct.pack("<dB", rate, flags),
    ])


def _sample_record(n_t, n_r, n_e, P, seed, index, cfg):
    """Draw channel i and label it with the oracle solver."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    H = rng.standard_normal((n_r, n_t))
    G = rng.standard_normal((n_e, n_t))
    ch = ChannelPair(H, G)
    cfg_i = replace(cfg, seed=int(rng.integers(0, 2**63 - 1)))
    res = solve_covariance_pg(ch, P, cfg_i)
    v = encode_features(ch, n_t)
    q = encode_cov(res.cov, n_t)
    flags = 0 if res.converged else FLAG_NONCONVERGED
    return _pack_record(n_t, H, G, v, q, res.rate, flags)


def _gen_chunk(args):
    n_t, n_r, n_e, P, seed, lo, hi, cfg = args
    return [_sample_record(n_t, n_r, n_e, P, seed, i, cfg) for i in range(lo, hi)]


def generate_set(path, n_t, n_r, n_e, count, P, seed,
                 cfg: SolverConfig | None = None, workers: int = 1,
                 progress=None):
    """Write `count` oracle-labeled standard-Gaussian channels to `path`.

    Deterministic per seed regardless of `workers`; non-converged oracle
    runs are flagged in the record, never dropped. Returns the header.
    """
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    if P <= 0:
        raise ContractError(f"power budget must be positive, got {P}")
    cfg = cfg or SolverConfig()
    header = DatasetHeader(count, n_t, n_r, n_e, float(P), int(seed))
    chunk = 256
    bounds = [(lo, min(lo + chunk, count)) for lo in range(0, count, chunk)]
    jobs = [(n_t, n_r, n_e, float(P), int(seed), lo, hi, cfg) for lo, hi in bounds]
    with open(path, "wb") as fh:
        fh.write(_pack_header(header))
        done = 0
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for recs in pool.map(_gen_chunk, jobs):
                    fh.write(b"".join(recs))
                    done += len(recs)
                    if progress is not None:
                        progress(done, count)
        else:
            for job in jobs:
                recs = _gen_chunk(job)
                fh.write(b"".join(recs))
                done += len(recs)
                if progress is not None:
                    progress(done, count)
    return header


def _read_exact(fh, n, offset, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(
            f"file truncated at byte {offset + len(buf)} while reading {what}"
        )
    return buf


def read_header(fh_or_path):
    if isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__"):
        with open(fh_or_path, "rb") as fh:
            return read_header(fh)
    fh = fh_or_path
    buf = _read_exact(fh, _HEADER_SIZE, 0, "header")
    magic, version, count, n_t, n_r, n_e, P, seed = struct.unpack(_HEADER_FMT, buf)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"unsupported dataset version {version}")
    return DatasetHeader(count, n_t, n_r, n_e, P, seed)


def _record_body_size(n_t, n_r, n_e):
    return 8 * (n_r * n_t + n_e * n_t + feature_length(n_t) + cov_length(n_t)) + 9


def _read_record(fh, header, offset):
    dims = _read_exact(fh, 8, offset, "record dims")
    n_r, n_e = struct.unpack(_REC_DIMS_FMT, dims)
    if n_r < 1 or n_e < 1:
        raise DataFormatError(f"corrupt record dims ({n_r},{n_e}) at byte {offset}")
    n_t = header.n_t
    body = _read_exact(fh, _record_body_size(n_t, n_r, n_e), offset + 8, "record body")
    pos = 0

    def take(n_items, shape):
        nonlocal pos
        arr = np.frombuffer(body, dtype="<f8", count=n_items, offset=pos)
        pos += 8 * n_items
        return arr.reshape(shape).copy()

    H = take(n_r * n_t, (n_r, n_t))
    G = take(n_e * n_t, (n_e, n_t))
    v = take(feature_length(n_t), (-1,))
    q = take(cov_length(n_t), (-1,))
    rate, flags = struct.unpack_from("<dB", body, pos)
    return DatasetRecord(H=H, G=G, v=v, q=q, P=header.P, rate=rate, flags=flags)


def read_set(path):
    """Stream records from a dataset file, validating as it goes."""
    with open(path, "rb") as fh:
        header = read_header(fh)
        offset = _HEADER_SIZE
        for _ in range(header.sample_count):
            rec = _read_record(fh, header, offset)
            offset += 8 + _record_body_size(header.n_t, rec.n_r, rec.n_e)
            yield rec
        if fh.read(1):
            raise DataFormatError(
                f"trailing bytes after {header.sample_count} records (byte {offset})"
            )


def load_arrays(path):
    """Materialize a dataset: (header, records, V, Qv, rates) with the
    feature matrix V and target matrix Qv stacked for training."""
    header = read_header(path)
    records = list(read_set(path))
    V = np.stack([r.v for r in records]) if records else np.zeros((0, 0))
    Qv = np.stack([r.q for r in records]) if records else np.zeros((0, 0))
    rates = np.array([r.rate for r in records])
    return header, records, V, Qv, rates


def _raw_records(path):
    """Record byte blobs in file order (used to cascade without re-encoding)."""
    blobs = []
    with open(path, "rb") as fh:
        header = read_header(fh)
        offset = _HEADER_SIZE
        for _ in range(header.sample_count):
            dims = _read_exact(fh, 8, offset, "record dims")
            n_r, n_e = struct.unpack(_REC_DIMS_FMT, dims)
            body = _read_exact(
                fh, _record_body_size(header.n_t, n_r, n_e), offset + 8, "record body"
            )
            blobs.append(dims + body)
            offset += len(dims) + len(body)
    return header, blobs


def cascade_sets(path_a, path_b, seed, out_path):
    """Concatenate two sets and shuffle them with a seeded permutation.

    Inputs must agree on n_t and P. The output header keeps the shared
    antenna setting if there is one, else the mixed sentinel (0, 0).
    """
    ha, recs_a = _raw_records(path_a)
    hb, recs_b = _raw_records(path_b)
    if ha.n_t != hb.n_t:
        raise ContractError(f"n_t mismatch: {ha.n_t} vs {hb.n_t}")
    if ha.P != hb.P:
        raise ContractError(f"power mismatch: {ha.P} vs {hb.P}")
    blobs = recs_a + recs_b
    order = np.random.default_rng(seed).permutation(len(blobs))
    same = (ha.n_r, ha.n_e) == (hb.n_r, hb.n_e) and not ha.mixed
    header = DatasetHeader(
        sample_count=len(blobs),
        n_t=ha.n_t,
        n_r=ha.n_r if same else 0,
        n_e=ha.n_e if same else 0,
        P=ha.P,
        seed=int(seed),
    )
    with open(out_path, "wb") as fh:
        fh.write(_pack_header(header))
        for i in order:
            fh.write(blobs[i])
    return header


def export_csv(path, csv_path):
    """Human-inspectable dump: one record per line. H and G are packed
    into single space-separated columns so mixed files keep one schema."""
    header = read_header(path)
    n_t = header.n_t
    v_cols = [f"v_{i}" for i in range(feature_length(n_t))]
    q_cols = ["q11", "q22", "q33", "q12", "q23", "q13"] if n_t == 3 else [
        f"q_{i}" for i in range(cov_length(n_t))
    ]
    with open(csv_path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(
            ["index", "n_r", "n_e", "P", "rate", "flags", "H", "G"] + v_cols + q_cols
        )
        for i, rec in enumerate(read_set(path)):
            writer.writerow(
                [i, rec.n_r, rec.n_e, repr(rec.P), repr(rec.rate), rec.flags,
                 " ".join(repr(x) for x in rec.H.ravel()),
                 " ".join(repr(x) for x in rec.G.ravel())]
                + [repr(x) for x in rec.v]
                + [repr(x) for x in rec.q]
            )
