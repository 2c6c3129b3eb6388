"""Cooperative multi-car agent training toolkit.

Pipeline stages: PID expert trajectory generation, random-distillation
reward learning, adversarial policy pre-training, shared-parameter
actor-critic joint training, and round-based evaluation.
"""

__version__ = "0.1.0"
