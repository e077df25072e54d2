"""Text classifiers trained from scratch: nearest-centroid few-shot over
embeddings, and tf-idf features with one-vs-rest logistic regression.

Both produce the same model object and the same predict() contract:
class labels sorted lexicographically, deterministic scores, argmax with
ties going to the lexicographically first label. Models serialize to
plain JSON so identical training inputs give byte-identical files.

The logistic loss and gradient are module-level functions on purpose:
the gradient is verified against central finite differences in tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import terms_of
from .errors import EmptyExamples, SingleClass

CENTROID_FEWSHOT = "centroid_fewshot"
TFIDF_LINEAR = "tfidf_linear"

DEFAULT_EPOCHS = 100
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_SEED = 42


@dataclass(frozen=True)
class TrainingMeta:
    seed: int
    epochs: int
    learning_rate: float


@dataclass
class LinearTextModel:
    kind: str
    classes: list[str]
    training_meta: TrainingMeta
    # centroid_fewshot
    centroids: np.ndarray | None = None          # (C, d)
    embedder_info: dict | None = None
    # tfidf_linear
    vocab: list[str] | None = None
    idf: np.ndarray | None = None                # (V,)
    weights: np.ndarray | None = None            # (C, V)
    bias: np.ndarray | None = None               # (C,)


def _check_dataset(pairs: list[tuple[str, str]],
                   min_per_class: int) -> list[str]:
    if not pairs:
        raise EmptyExamples("no training examples given")
    counts: dict[str, int] = {}
    for _, label in pairs:
        counts[label] = counts.get(label, 0) + 1
    if len(counts) < 2:
        raise SingleClass("training data must cover at least two classes")
    for label, n in sorted(counts.items()):
        if n < min_per_class:
            raise EmptyExamples(
                f"class {label!r} has {n} examples, needs {min_per_class}")
    return sorted(counts)


# --- nearest-centroid few-shot ---------------------------------------------

def train_fewshot(examples: list[tuple[str, str]], embedder) -> LinearTextModel:
    """Per-class mean of embedded examples, re-normalized to unit length."""
    classes = _check_dataset(examples, min_per_class=1)
    dim = embedder.dim
    centroids = np.zeros((len(classes), dim), dtype=np.float64)
    for ci, cls in enumerate(classes):
        vecs = [embedder.embed(text).astype(np.float64)
                for text, label in examples if label == cls]
        mean = np.mean(vecs, axis=0)
        norm = float(np.linalg.norm(mean))
        centroids[ci] = mean / norm if norm > 0 else mean
    info = embedder.describe() if hasattr(embedder, "describe") else None
    return LinearTextModel(
        kind=CENTROID_FEWSHOT,
        classes=classes,
        training_meta=TrainingMeta(seed=0, epochs=0, learning_rate=0.0),
        centroids=centroids,
        embedder_info=info,
    )


# --- tf-idf + logistic regression ------------------------------------------

def tfidf_vocabulary(texts: list[str]) -> tuple[list[str], np.ndarray]:
    """Sorted vocabulary and idf = ln(N/df) + 1 over the given texts."""
    n = len(texts)
    df: dict[str, int] = {}
    for text in texts:
        for term in set(terms_of(text)):
            df[term] = df.get(term, 0) + 1
    vocab = sorted(df)
    idf = np.array([np.log(n / df[t]) + 1.0 for t in vocab],
                   dtype=np.float64)
    return vocab, idf


def tfidf_vector(text: str, vocab_index: dict[str, int],
                 idf: np.ndarray) -> np.ndarray:
    x = np.zeros(len(idf), dtype=np.float64)
    for term in terms_of(text):
        j = vocab_index.get(term)
        if j is not None:
            x[j] += 1.0
    x *= idf
    norm = float(np.linalg.norm(x))
    if norm > 0:
        x /= norm
    return x


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray,
                  y: np.ndarray) -> float:
    """Mean binary cross-entropy, computed via logaddexp for stability."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def logistic_grad(w: np.ndarray, b: float, X: np.ndarray,
                  y: np.ndarray) -> tuple[np.ndarray, float]:
    z = X @ w + b
    p = 1.0 / (1.0 + np.exp(-z))
    resid = p - y
    return X.T @ resid / len(y), float(np.mean(resid))


def train_tfidf_linear(dataset: list[tuple[str, str]],
                       epochs: int = DEFAULT_EPOCHS,
                       learning_rate: float = DEFAULT_LEARNING_RATE,
                       seed: int = DEFAULT_SEED) -> LinearTextModel:
    """One-vs-rest logistic regression by full-batch gradient descent.

    Weights start at zero, so training is deterministic; the seed is
    recorded for provenance but consumed nowhere in the optimizer.
    """
    classes = _check_dataset(dataset, min_per_class=2)
    texts = [text for text, _ in dataset]
    labels = [label for _, label in dataset]
    vocab, idf = tfidf_vocabulary(texts)
    vocab_index = {t: j for j, t in enumerate(vocab)}
    X = np.stack([tfidf_vector(t, vocab_index, idf) for t in texts])
    weights = np.zeros((len(classes), len(vocab)), dtype=np.float64)
    bias = np.zeros(len(classes), dtype=np.float64)
    for ci, cls in enumerate(classes):
        y = np.array([1.0 if lab == cls else 0.0 for lab in labels])
        w = np.zeros(len(vocab), dtype=np.float64)
        b = 0.0
        for _ in range(epochs):
            gw, gb = logistic_grad(w, b, X, y)
            w -= learning_rate * gw
            b -= learning_rate * gb
        weights[ci] = w
        bias[ci] = b
    return LinearTextModel(
        kind=TFIDF_LINEAR,
        classes=classes,
        training_meta=TrainingMeta(seed=seed, epochs=epochs,
                                   learning_rate=learning_rate),
        vocab=vocab,
        idf=idf,
        weights=weights,
        bias=bias,
    )


# --- prediction ------------------------------------------------------------

def predict(model: LinearTextModel, text: str,
            embedder=None) -> tuple[str, dict[str, float]]:
    """Label plus per-class scores. Centroid models need the embedder that
    trained them; ties go to the lexicographically first class (argmax
    returns the first index, and classes are sorted)."""
    if model.kind == CENTROID_FEWSHOT:
        if embedder is None:
            raise ValueError("centroid models require an embedder to predict")
        v = embedder.embed(text).astype(np.float64)
        norm = float(np.linalg.norm(v))
        if norm > 0:
            v = v / norm
        raw = model.centroids @ v
    elif model.kind == TFIDF_LINEAR:
        vocab_index = {t: j for j, t in enumerate(model.vocab)}
        x = tfidf_vector(text, vocab_index, model.idf)
        z = model.weights @ x + model.bias
        raw = 1.0 / (1.0 + np.exp(-z))
    else:
        raise ValueError(f"unknown model kind: {model.kind}")
    best = int(np.argmax(raw))
    scores = {cls: float(raw[ci]) for ci, cls in enumerate(model.classes)}
    return model.classes[best], scores


# --- serialization ---------------------------------------------------------

def model_to_dict(model: LinearTextModel) -> dict:
    out: dict = {
        "kind": model.kind,
        "classes": model.classes,
        "training_meta": {
            "seed": model.training_meta.seed,
            "epochs": model.training_meta.epochs,
            "learning_rate": model.training_meta.learning_rate,
        },
    }
    if model.kind == CENTROID_FEWSHOT:
        out["centroids"] = model.centroids.tolist()
        out["embedder"] = model.embedder_info
    else:
        out["vocab"] = model.vocab
        out["idf"] = model.idf.tolist()
        out["weights"] = model.weights.tolist()
        out["bias"] = model.bias.tolist()
    return out


def model_from_dict(raw: dict) -> LinearTextModel:
    meta = raw.get("training_meta") or {}
    tm = TrainingMeta(seed=meta.get("seed", 0), epochs=meta.get("epochs", 0),
                      learning_rate=meta.get("learning_rate", 0.0))
    kind = raw["kind"]
    if kind == CENTROID_FEWSHOT:
        return LinearTextModel(
            kind=kind, classes=list(raw["classes"]), training_meta=tm,
            centroids=np.array(raw["centroids"], dtype=np.float64),
            embedder_info=raw.get("embedder"),
        )
    if kind == TFIDF_LINEAR:
        return LinearTextModel(
            kind=kind, classes=list(raw["classes"]), training_meta=tm,
            vocab=list(raw["vocab"]),
            idf=np.array(raw["idf"], dtype=np.float64),
            weights=np.array(raw["weights"], dtype=np.float64),
            bias=np.array(raw["bias"], dtype=np.float64),
        )
    raise ValueError(f"unknown model kind: {kind}")


def serialize_model(model: LinearTextModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True,
                      separators=(",", ":"))


def save_model(model: LinearTextModel, path: str | Path) -> None:
    Path(path).write_text(serialize_model(model) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LinearTextModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def model_id_for(kind: str, pairs: list[tuple[str, str]],
                 params: dict) -> str:
    """Content hash of training inputs and parameters: same data in, same
    id out, so retraining is idempotent."""
    payload = json.dumps(
        {"kind": kind, "pairs": list(map(list, pairs)), "params": params},
        sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
