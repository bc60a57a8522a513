"""Sentence-to-FOL toolkit: linearization, alignment metric, seq2seq models."""

try:
    from ._nl2fol import (  # installed package layout
        Model,
        __version__,
        alpha_equal,
        categories,
        delinearize,
        generate,
        gradient_check,
        linearize,
        perturb_mapping,
        score,
        score_corpus,
        train,
    )
except ImportError:  # build-tree layout: extension on PYTHONPATH next to the package
    from _nl2fol import (
        Model,
        __version__,
        alpha_equal,
        categories,
        delinearize,
        generate,
        gradient_check,
        linearize,
        perturb_mapping,
        score,
        score_corpus,
        train,
    )

__all__ = [
    "Model",
    "__version__",
    "alpha_equal",
    "categories",
    "delinearize",
    "generate",
    "gradient_check",
    "linearize",
    "perturb_mapping",
    "score",
    "score_corpus",
    "train",
]
