import numpy as np
import pytest

from emocaps.evaluation import LABELS

_FILLERS = ("the", "and", "to", "it")


def make_toy_examples():
    """60 linearly separable examples, 10 per class, deterministic.

    Each example mixes a few class-specific signature tokens with shared
    fillers, so the model has to read content words rather than length.
    """
    rng = np.random.default_rng(77)
    examples = []
    for c, label in enumerate(LABELS):
        for i in range(10):
            tokens = [f"{label}sig{rng.integers(4)}" for _ in range(2 + i % 3)]
            tokens += [_FILLERS[rng.integers(len(_FILLERS))] for _ in range(1 + i % 2)]
            order = rng.permutation(len(tokens))
            examples.append((c, " ".join(tokens[k] for k in order)))
    return examples


def write_labeled(path, examples):
    path.write_text(
        "".join(f"{LABELS[c]}\t{text}\n" for c, text in examples), encoding="utf-8"
    )


@pytest.fixture(scope="session")
def toy_examples():
    return make_toy_examples()
