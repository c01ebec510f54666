"""Oblivious cell-probe simulator and experiment harness for dynamic ANN."""

from .ann import AnnParams, Point, ann_oracle, answer_valid, hamming, neighborhood
from .machine import Machine, MachineError, SessionTrace, new_machine

__all__ = [
    "AnnParams",
    "Machine",
    "MachineError",
    "Point",
    "SessionTrace",
    "ann_oracle",
    "answer_valid",
    "hamming",
    "neighborhood",
    "new_machine",
]
