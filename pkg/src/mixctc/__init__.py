"""Mixed-unit CTC speech recognition components in numpy."""

from __future__ import annotations

from .ctc import Posteriorgram, brute_force_loss, ctc_loss, greedy_decode
from .metrics import wer
from .tokenizer import MixedVocab, build_vocab, encode_sentence

__version__ = "0.1.0"
