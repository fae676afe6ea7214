"""Optimal program synthesis from noisy string examples with abstract tree automata."""

from .dsl import evaluate, load_grammar, parse_program, render
from .objective import LOSSES, Objective, Score, get_loss
from .synthesis import SynthesisConfig, synthesize, synthesize_cfta

__version__ = "0.1.0"
