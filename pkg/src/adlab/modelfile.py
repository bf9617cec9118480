"""JSON model files and atom-list files.

A model file is one JSON object with keys ``n``, ``d``, ``A_re``, ``A_im``,
``B_re``, ``B_im`` and ``label``; matrices are row-major nested lists. A file
may carry an extra ``control`` object (``alpha_re``, ``alpha_im``,
``perturbed_re``, ``perturbed_im``) describing a negative control: an
explicitly given perturbed operator that is not ``A + B alpha B*``. Control
files skip the cyclicity check on load; all others must be cyclic.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .linalg import DEFAULT_TOL, Tolerances
from .measures import MatrixMeasure, scalar_measure
from .model import ControlCase, PerturbationModel


def _split(M: np.ndarray) -> tuple[list, list]:
    M = np.asarray(M, dtype=complex)
    return M.real.tolist(), M.imag.tolist()


def _join(re, im, shape) -> np.ndarray:
    re = np.asarray(re, dtype=float).reshape(shape)
    im = np.zeros(shape) if im is None else np.asarray(im, dtype=float).reshape(shape)
    return re + 1j * im


def model_to_dict(model: PerturbationModel, control: ControlCase | None = None) -> dict:
    A_re, A_im = _split(model.A)
    B_re, B_im = _split(model.B)
    doc = {
        "n": model.n, "d": model.d,
        "A_re": A_re, "A_im": A_im, "B_re": B_re, "B_im": B_im,
        "label": model.label,
    }
    if control is not None:
        a_re, a_im = _split(control.alpha)
        p_re, p_im = _split(control.perturbed)
        doc["control"] = {"alpha_re": a_re, "alpha_im": a_im,
                          "perturbed_re": p_re, "perturbed_im": p_im}
    return doc


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def model_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def save_model(path, model: PerturbationModel, control: ControlCase | None = None) -> dict:
    doc = model_to_dict(model, control)
    Path(path).write_text(dumps(doc))
    return doc


def model_from_dict(doc: dict, tol: Tolerances = DEFAULT_TOL):
    """Returns ``(model, control_or_None)``; raises ``ValueError``/``KeyError`` on bad input."""
    n, d = int(doc["n"]), int(doc["d"])
    A = _join(doc["A_re"], doc.get("A_im"), (n, n))
    B = _join(doc["B_re"], doc.get("B_im"), (n, d))
    ctl = doc.get("control")
    model = PerturbationModel(A, B, str(doc.get("label", "")), tol,
                              require_cyclic=ctl is None)
    if ctl is None:
        return model, None
    alpha = _join(ctl["alpha_re"], ctl.get("alpha_im"), (d, d))
    H = _join(ctl["perturbed_re"], ctl.get("perturbed_im"), (n, n))
    return model, ControlCase(model, alpha, H)


def load_model(path, tol: Tolerances = DEFAULT_TOL):
    doc = json.loads(Path(path).read_text())
    model, control = model_from_dict(doc, tol)
    return model, control, doc


def parse_nu(doc, tol: Tolerances = DEFAULT_TOL) -> MatrixMeasure:
    """``[{"x": float, "mass": float > 0}, ...]`` to a scalar atomic measure."""
    if not isinstance(doc, list):
        raise ValueError("nu specification must be a JSON list")
    if not doc:
        return MatrixMeasure(1)
    xs = [float(a["x"]) for a in doc]
    ms = [float(a["mass"]) for a in doc]
    return scalar_measure(xs, ms, tol)


def nu_to_list(nu: MatrixMeasure) -> list[dict]:
    return [{"x": float(x), "mass": float(w[0, 0].real)}
            for x, w in zip(nu.locations, nu.weights)]
