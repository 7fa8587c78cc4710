"""Central-difference gradient verification in float64."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import GradCheckError
from .params import ParamStore
from .tensor import Tensor


@dataclass
class Mismatch:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    tol: float
    step: float
    checked: int = 0
    max_rel_error: float = 0.0
    worst: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.tol


def _as_store(params) -> ParamStore:
    if isinstance(params, ParamStore):
        return params
    return ParamStore(params)


def grad_check(builder: Callable[[Mapping[str, Tensor]], Tensor], params, step=1e-4, tol=1e-4,
               max_per_param: int | None = 16, rng=None, raise_on_fail=True) -> GradCheckReport:
    """Compare backprop gradients of ``builder(params)`` with finite differences.

    ``builder`` gets a name -> Tensor mapping and must return a scalar. The
    whole graph is re-run in float64, so builders must not hard-code float32
    constants. Relative error is ``|a - n| / max(1, |a|)``.
    """
    store = _as_store(params)
    base = {k: v.astype(np.float64) for k, v in store.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in base.items()}
    out = builder(leaves)
    if out.data.size != 1:
        raise ValueError("grad_check builder must return a scalar")
    out.backward()

    def f(name, idx, delta):
        vals = {k: Tensor(v) for k, v in base.items()}
        arr = base[name].copy()
        arr[idx] += delta
        vals[name] = Tensor(arr)
        return float(builder(vals).data)

    report = GradCheckReport(tol=tol, step=step)
    gen = rng.gen if rng is not None else np.random.default_rng(0)
    mismatches = []
    for name, arr in base.items():
        flat = np.arange(arr.size)
        if max_per_param is not None and arr.size > max_per_param:
            flat = gen.choice(arr.size, size=max_per_param, replace=False)
        analytic = leaves[name].grad
        for fi in flat:
            idx = np.unravel_index(int(fi), arr.shape)
            num = (f(name, idx, step) - f(name, idx, -step)) / (2 * step)
            a = float(analytic[idx])
            rel = abs(a - num) / np.max([1.0, abs(a)])
            report.checked += 1
            mismatches.append(Mismatch(name, tuple(int(i) for i in idx), a, num, float(rel)))
    mismatches.sort(key=lambda m: -m.rel_error)
    report.worst = [m for m in mismatches if m.rel_error > tol] or mismatches[:3]
    report.max_rel_error = mismatches[0].rel_error if mismatches else 0.0
    if raise_on_fail and not report.ok:
        raise GradCheckError(report)
    return report


# ---------------------------------------------------------------- random graphs

def random_op_graph(rng, n_ops: int | None = None):
    """Build a random composition of engine ops.

    Returns ``(builder, params, ops)`` where ``builder`` maps a name -> Tensor
    dict to a scalar and ``ops`` lists the op names used.
    """
    from . import tensor as T

    g = rng.gen
    c = int(g.choice([4, 8]))
    h, w = int(g.integers(4, 8)), int(g.integers(4, 8))
    n_ops = n_ops or int(g.integers(2, 5))
    params = {"x": g.normal(size=(1, c, h, w))}
    steps = []
    shape = (1, c, h, w)
    pool = ["conv", "dwconv", "resize", "shuffle", "ln", "softmax", "gelu", "sigmoid", "relu",
            "hadamard", "matmul", "l2norm", "clamp", "pool_max", "pool_mean", "concat", "permute"]
    for i in range(n_ops):
        op = str(g.choice(pool))
        b, cc, hh, ww = shape
        if op == "conv":
            k = int(g.choice([1, 3]))
            stride = int(g.choice([1, 2])) if hh >= 4 and ww >= 4 else 1
            params[f"w{i}"] = g.normal(size=(cc, cc, k, k)) / np.sqrt(cc * k * k)
            params[f"b{i}"] = g.normal(size=cc) * 0.1
            steps.append((op, dict(k=k, stride=stride, i=i)))
            shape = (b, cc, (hh + 2 * (k // 2) - k) // stride + 1, (ww + 2 * (k // 2) - k) // stride + 1)
        elif op == "dwconv":
            params[f"w{i}"] = g.normal(size=(cc, 1, 3, 3)) / 3
            steps.append((op, dict(i=i)))
        elif op == "resize":
            oh, ow = int(g.integers(2, 9)), int(g.integers(2, 9))
            steps.append((op, dict(oh=oh, ow=ow)))
            shape = (b, cc, oh, ow)
        elif op == "shuffle":
            if cc % 4:
                continue
            steps.append((op, {}))
            shape = (b, cc // 4, hh * 2, ww * 2)
        elif op == "ln":
            if cc < 4:  # two-channel normalisation is nearly singular
                continue
            params[f"g{i}"] = 1 + 0.1 * g.normal(size=cc)
            params[f"be{i}"] = 0.1 * g.normal(size=cc)
            steps.append((op, dict(i=i)))
        elif op == "softmax":
            steps.append((op, dict(axis=int(g.choice([1, 2, 3])), scale=float(g.uniform(0.5, 2.0)))))
        elif op == "hadamard":
            params[f"m{i}"] = g.normal(size=(1, cc, 1, ww))
            steps.append((op, dict(i=i)))
        elif op == "matmul":
            steps.append((op, {}))
            shape = (b, cc, cc, 1)
        elif op == "l2norm":
            steps.append((op, dict(axis=int(g.choice([1, 3])))))
        elif op == "pool_max":
            steps.append((op, {}))
            shape = (b, 1, hh, ww)
        elif op == "pool_mean":
            steps.append((op, {}))
            shape = (b, cc, 1, 1)
        elif op == "concat":
            steps.append((op, {}))
            shape = (b, 2 * cc, hh, ww)
        elif op == "permute":
            steps.append((op, {}))
            shape = (b, cc, ww, hh)
        else:
            steps.append((op, {}))
    proj = g.normal(size=shape)

    def builder(p):
        x = p["x"]
        for op, a in steps:
            if op == "conv":
                i = a["i"]
                x = T.conv2d(x, p[f"w{i}"], p[f"b{i}"], stride=a["stride"], padding=a["k"] // 2)
            elif op == "dwconv":
                x = T.conv2d(x, p[f"w{a['i']}"], padding=1, groups=x.shape[1])
            elif op == "resize":
                x = T.bilinear_resize(x, a["oh"], a["ow"])
            elif op == "shuffle":
                x = T.pixel_shuffle(x, 2)
            elif op == "ln":
                x = T.layer_norm(x, p[f"g{a['i']}"], p[f"be{a['i']}"])
            elif op == "softmax":
                x = T.softmax(x, axis=a["axis"], scale=a["scale"])
            elif op == "gelu":
                x = T.gelu(x)
            elif op == "sigmoid":
                x = T.sigmoid(x)
            elif op == "relu":
                x = T.relu(x)
            elif op == "clamp":
                x = T.clamp(x, -0.5, 0.5)
            elif op == "hadamard":
                x = x * p[f"m{a['i']}"]
            elif op == "matmul":
                b_, c_, h_, w_ = x.shape
                f = T.reshape(x, (b_, c_, h_ * w_))
                x = T.reshape(T.matmul(f, T.permute(f, (0, 2, 1))), (b_, c_, c_, 1))
            elif op == "l2norm":
                x = T.l2_normalize(x, axis=a["axis"])
            elif op == "pool_max":
                x = T.max(x, axis=1, keepdims=True)
            elif op == "pool_mean":
                x = T.mean(x, axis=(2, 3), keepdims=True)
            elif op == "concat":
                x = T.concat([x, T.sigmoid(x)], axis=1)
            elif op == "permute":
                x = T.permute(x, (0, 1, 3, 2))
        return T.sum(x * T.Tensor(proj.astype(x.dtype)))

    return builder, params, [s[0] for s in steps]
