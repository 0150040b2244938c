"""Reward-in-context prompting harness.

A policy LLM is prompted repeatedly on one task while an experience buffer
of its own past attempts, each annotated with scalar rewards, grows inside
the prompt. The package provides the episode loop, the reward functions
(rule-based verifiers and LLM judges), a deterministic text-world
environment, the standard comparison baselines, and metrics/export tooling.
"""

from icrl.buffer import AttemptRecord, ExperienceBuffer
from icrl.config import RunConfig, parse_config
from icrl.instructions import InstructionKind, instruction_text, select_instruction
from icrl.loop import EpisodeLog, run_problem
from icrl.policy import GenRequest, GenResponse, HttpChatBackend, ScriptedPolicy
from icrl.prompting import PromptBundle, assemble_prompt, render_attempt

__version__ = "0.1.0"

__all__ = [
    "AttemptRecord",
    "EpisodeLog",
    "ExperienceBuffer",
    "GenRequest",
    "GenResponse",
    "HttpChatBackend",
    "InstructionKind",
    "PromptBundle",
    "RunConfig",
    "ScriptedPolicy",
    "assemble_prompt",
    "instruction_text",
    "parse_config",
    "render_attempt",
    "run_problem",
    "select_instruction",
    "__version__",
]
