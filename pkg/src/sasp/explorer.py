"""Design-space sweep over (array size, weight format, pruning rate)."""
import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from . import costmodel
from ._jit import thread_count
from .accel import ArrayConfig, CycleStats, WeightFormat, cycles_tile
from .encoder import (FF_ROLES, ROLES, EncoderConfig, encoder_forward, matrix_id,
                      qos_proxy, synthetic_input, synthetic_layers)
from .pruner import global_prune

CSV_COLUMNS = (
    "format", "T", "rate", "speedup", "qos_proxy", "area_mm2", "rel_power",
    "energy", "aep", "weight_load_cycles", "stream_cycles", "skipped_cycles",
)


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    sizes: tuple = (4, 8, 16, 32)
    formats: tuple = (WeightFormat.FP32, WeightFormat.INT8)
    rates: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    workload: EncoderConfig = field(default_factory=EncoderConfig)
    scope: str = "ff"
    pipe_depth: int = 4
    instr_overhead: int = 1
    qos_budget: float = 0.05

    def __post_init__(self):
        for name in ("sizes", "formats", "rates"):
            if not getattr(self, name):
                raise ValueError(f"sweep needs at least one entry in {name}")
        object.__setattr__(self, "formats", tuple(WeightFormat(f) for f in self.formats))
        for r in self.rates:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"pruning rate {r} outside [0, 1]")
        for t in self.sizes:
            if not 1 <= t <= 1024:
                raise ValueError(f"array size {t} outside [1, 1024]")

    @property
    def seed(self):
        return self.workload.seed


@dataclass
class DesignPoint:
    format: WeightFormat
    T: int
    rate: float
    speedup: float
    qos_proxy: float
    area_mm2: float
    area_source: str
    rel_power: float
    energy: float
    stats: CycleStats
    dense_cycles: int
    speedup_vs_ref: float
    achieved_sparsity: float
    layer_runtime: list

    @property
    def aep(self):
        return self.area_mm2 * self.energy

    def row(self):
        s = self.stats
        return (str(self.format), self.T, self.rate, self.speedup, self.qos_proxy,
                self.area_mm2, self.rel_power, self.energy, self.aep,
                s.weight_load_cycles, s.stream_cycles, s.skipped_cycles)

    def to_dict(self):
        d = dict(zip(CSV_COLUMNS, self.row()))
        d.update(
            area_source=self.area_source,
            total_cycles=self.stats.total_cycles,
            skipped_tile_count=self.stats.skipped_tile_count,
            dense_cycles=self.dense_cycles,
            speedup_vs_ref=self.speedup_vs_ref,
            achieved_sparsity=self.achieved_sparsity,
            layer_normalized_runtime=self.layer_runtime,
        )
        return d


def _config(spec, T, fmt):
    return ArrayConfig(T, fmt, spec.pipe_depth, spec.instr_overhead)


def _prunable(spec, layers):
    roles = FF_ROLES if spec.scope == "ff" else ROLES
    return [(matrix_id(i, r), getattr(lw, r)) for i, lw in enumerate(layers) for r in roles]


def _ref_cycles(spec):
    """Dense cycles of the workload on the smallest FP32 array of the sweep."""
    wl = spec.workload
    cfg = _config(spec, min(spec.sizes), WeightFormat.FP32)
    T = cfg.size
    per_tile = cycles_tile(cfg, wl.seq_len)
    dm, df = -(-wl.d_model // T), -(-wl.d_ff // T)
    return wl.n_layers * (4 * dm * dm + 2 * dm * df) * per_tile


def _evaluate(spec, layers, x, reference, ref_cycles, T, fmt, rate):
    cfg = _config(spec, T, fmt)
    masks, report = global_prune(_prunable(spec, layers), T, rate)
    out, st = encoder_forward(layers, x, cfg, masks, spec.workload.n_heads, spec.scope)
    total = st.total
    dense = sum(st.dense_cycles)
    cost = costmodel.energy_and_speedup(cfg, total, dense)
    return DesignPoint(
        format=cfg.weight_format, T=T, rate=rate, speedup=cost.speedup,
        qos_proxy=qos_proxy(reference[T], out), area_mm2=cost.area_mm2,
        area_source=costmodel.area_source(cfg), rel_power=cost.rel_power,
        energy=cost.energy, stats=total, dense_cycles=dense,
        speedup_vs_ref=ref_cycles / total.total_cycles,
        achieved_sparsity=report.global_sparsity,
        layer_runtime=st.normalized_runtime,
    )


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def run_sweep(spec, workers=None):
    workers = thread_count() if workers is None else workers
    layers = synthetic_layers(spec.workload)
    x = synthetic_input(spec.workload)
    sizes = sorted(set(spec.sizes))
    n_heads = spec.workload.n_heads

    def ref(T):
        try:
            out, _ = encoder_forward(layers, x, _config(spec, T, WeightFormat.FP32), None, n_heads)
        except Exception as exc:
            raise SweepError(f"fp32 dense reference at T={T}: {exc}") from exc
        return out

    reference = dict(zip(sizes, _pmap(ref, sizes, workers)))
    ref_cycles = _ref_cycles(spec)
    grid = [(fmt, T, float(r)) for fmt in spec.formats for T in sizes for r in sorted(set(spec.rates))]

    def point(item):
        fmt, T, rate = item
        try:
            return _evaluate(spec, layers, x, reference, ref_cycles, T, fmt, rate)
        except Exception as exc:
            raise SweepError(f"design point format={fmt} T={T} rate={rate}: {exc}") from exc

    points = _pmap(point, grid, workers)
    points.sort(key=lambda p: (str(p.format), p.T, p.rate))
    return points


# -- analysis ------------------------------------------------------------------


def dominates(a, b):
    ge = a.speedup >= b.speedup and a.qos_proxy <= b.qos_proxy and a.aep <= b.aep
    gt = a.speedup > b.speedup or a.qos_proxy < b.qos_proxy or a.aep < b.aep
    return ge and gt


def pareto_filter(points):
    """Points not dominated in (max speedup, min qos_proxy, min aep)."""
    points = list(points)
    return [p for p in points if not any(dominates(q, p) for q in points if q is not p)]


def max_admissible_rate(rates, qos_of, budget):
    """Largest rate whose QoS proxy stays within ``budget``, found by bisection.

    Treats the proxy as non-decreasing in the rate; use
    :func:`monotonicity_violations` to check that assumption. Returns None
    when even the smallest rate exceeds the budget.
    """
    rates = sorted(rates)
    if qos_of(rates[0]) > budget:
        return None
    lo, hi = 0, len(rates) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if qos_of(rates[mid]) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return rates[lo]


def monotonicity_violations(points):
    """(format, T, rate_lo, rate_hi) pairs where the QoS proxy decreases with rate."""
    out = []
    groups = {}
    for p in points:
        groups.setdefault((str(p.format), p.T), []).append(p)
    for (fmt, T), ps in sorted(groups.items()):
        ps = sorted(ps, key=lambda p: p.rate)
        for a, b in zip(ps, ps[1:]):
            if b.qos_proxy < a.qos_proxy:
                out.append((fmt, T, a.rate, b.rate))
    return out


def budget_table(points, budget):
    """{format: {T: max admissible rate}} under a QoS budget."""
    groups = {}
    for p in points:
        groups.setdefault(str(p.format), {}).setdefault(p.T, {})[p.rate] = p.qos_proxy
    return {
        fmt: {T: max_admissible_rate(list(q), q.__getitem__, budget) for T, q in sorted(by_t.items())}
        for fmt, by_t in sorted(groups.items())
    }


# -- reports -------------------------------------------------------------------


def to_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in p.row()])
    return buf.getvalue()


def to_json(points, spec):
    doc = {
        "sweep": {
            "sizes": list(spec.sizes), "formats": [str(f) for f in spec.formats],
            "rates": list(spec.rates), "scope": spec.scope, "seed": spec.seed,
            "pipe_depth": spec.pipe_depth, "instr_overhead": spec.instr_overhead,
            "workload": asdict(spec.workload),
            "qos_budget": spec.qos_budget,
        },
        "points": [p.to_dict() for p in points],
        "pareto": [[str(p.format), p.T, p.rate] for p in pareto_filter(points)],
        "max_rate_under_budget": {
            fmt: {str(T): r for T, r in by_t.items()}
            for fmt, by_t in budget_table(points, spec.qos_budget).items()
        },
        "qos_monotonicity_violations": [list(v) for v in monotonicity_violations(points)],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
