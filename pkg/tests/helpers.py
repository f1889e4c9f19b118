"""Shared test utilities: random operators, dense references, CLI driving."""

import os
import subprocess
import sys
from itertools import product as iterproduct

import numpy as np

from paulievo import PauliSum, pauli_from_text
from paulievo.oracle import pauli_matrix, pauli_sum_matrix


def run_cli(*args, env_extra=None, cwd=None):
    env = os.environ.copy()
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "paulievo.cli", *args],
        capture_output=True, text=True, env=env, cwd=cwd,
    )


def read_rows(path, *, blank_wall_time=True):
    """Trajectory rows with the wall-time column blanked (it is the one
    legitimately nondeterministic column)."""
    header, rows = [], []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#") or line.startswith("tau,"):
                header.append(line)
            else:
                cells = line.split(",")
                if blank_wall_time:
                    cells[5] = ""
                rows.append(cells)
    return header, rows


def all_pauli_texts(n):
    """Every Pauli string of width n, in letter-enumeration order."""
    return ["".join(t) for t in iterproduct("IXYZ", repeat=n)]


def random_pauli_text(rng, n):
    return "".join(rng.choice(list("IXYZ")) for _ in range(n))


def random_pauli_sum(rng, n, n_terms, *, scale=1.0, with_identity=False):
    """A random real PauliSum with distinct strings."""
    texts = set()
    if with_identity:
        texts.add("I" * n)
    while len(texts) < n_terms:
        texts.add(random_pauli_text(rng, n))
    terms = []
    for text in sorted(texts):
        coeff = 1.0 if (with_identity and text == "I" * n) else \
            float(rng.uniform(-scale, scale) or 0.31)
        terms.append((coeff, text))
    return PauliSum.from_terms(n, terms)


def dense(a: PauliSum) -> np.ndarray:
    return pauli_sum_matrix(a)


def dense_of_text(text: str) -> np.ndarray:
    return pauli_matrix(pauli_from_text(text))


def normalized_trace_dense(mat: np.ndarray) -> complex:
    return np.trace(mat) / mat.shape[0]
