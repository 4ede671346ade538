"""Batch evaluation of enhancement methods on synthesized test inputs."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..nn.network import enhance_image
from ..synthpipe import pair_seed, synthesize
from .quality import discrete_entropy, histogram_equalize
from .tmqi import tmqi

METHODS = ("input", "he", "proposed")
REPORT_COLUMNS = ("id", "method", "tmqi", "tmqi_s", "tmqi_n", "entropy")
TEST_SIZE = 512


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    def means(self):
        """Per-method arithmetic means of every numeric column."""
        out = {}
        for method in dict.fromkeys(r["method"] for r in self.rows):
            sel = [r for r in self.rows if r["method"] == method]
            out[method] = {col: float(np.mean([r[col] for r in sel])) for col in REPORT_COLUMNS[2:]}
            out[method]["count"] = len(sel)
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([r["id"], r["method"]] + [repr(float(r[c])) for c in REPORT_COLUMNS[2:]])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"methods": self.means()}, indent=2, sort_keys=True)


def parse_methods(methods):
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    methods = list(dict.fromkeys(methods))
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
    return methods


def score(reference, img):
    q = tmqi(reference, img)
    return {"tmqi": q.Q, "tmqi_s": q.S, "tmqi_n": q.N, "entropy": discrete_entropy(img)}


def make_test_input(E, seed, size=TEST_SIZE):
    """Dark test input and its HDR reference patch, both ``size`` square."""
    x, _, provenance, patch = synthesize(E, seed, size=size, with_target=False)
    return x, patch, provenance


def evaluate(corpus, methods=("input", "he"), net=None, seed=0, ids=None, size=TEST_SIZE,
             outputs=None):
    """Score every method on one synthesized test input per HDR image.

    TMQI uses the HDR patch the input was rendered from as reference.
    If ``outputs`` is a dict it is filled with ``(id, method) -> image``.
    """
    methods = parse_methods(methods)
    if "proposed" in methods and net is None:
        raise ConfigError("method 'proposed' needs a trained network")
    ids = ids if ids is not None else [f"{i:04d}" for i in range(len(corpus))]
    report = MetricReport()
    for i, (E, image_id) in enumerate(zip(corpus, ids)):
        x, patch, _ = make_test_input(E, pair_seed(seed, [i]), size)
        for method in methods:
            if method == "input":
                out = x
            elif method == "he":
                out = histogram_equalize(x)
            else:
                out = enhance_image(net, x)
            if outputs is not None:
                outputs[(image_id, method)] = out
            report.rows.append({"id": image_id, "method": method, **score(patch, out)})
    return report
