"""Toolkit for blink/think/link GUI-agent completions: format checks, rewards,
GRPO advantages, ROI annotation and evaluation metrics."""

from .errors import (
    BtlError,
    ConfigError,
    DomainError,
    InvariantError,
    JoinError,
    ModelUnavailable,
    OverflowGuard,
    ParseError,
)
from .geometry import Matching, hungarian_match, iou
from .grammar import (
    check_content,
    check_template,
    parse_btl,
    serialize_blink,
    serialize_btl,
    try_parse,
    validate,
)
from .grpo import CompletionStats, GrpoConfig, group_advantages, grpo_objective, kl_estimate
from .reward import (
    GroundTruthStep,
    RewardBreakdown,
    allocation_s,
    reward_blink,
    reward_format,
    reward_link,
    reward_total,
)
from .types import ActionCall, BBox, BlinkElement, BtlOutput, LinkStep, ValidationReport

__version__ = "0.1.0"
