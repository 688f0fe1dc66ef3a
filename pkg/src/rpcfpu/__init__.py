"""Bit-exact soft binary32 FPU with a reduced-precision checker, exact bound
oracles and stuck-at fault campaigns."""

from __future__ import annotations

from .fault_campaign import (CampaignReport, Classification, ExperimentConfig, approximate_mpe,
                             classify, percentage_error, run_campaign, umud_stats)
from .float_bits import PackedFloat32, ReducedFloat, format_hex, parse_hex
from .nets import FaultSite, FaultSpec, OpKind
from .rpc_check import CheckClass, CheckVerdict, Status, SuppressionReason, check, check_batch
from .softfpu import FpuFlag, FpuResult, fpu_add, fpu_batch, fpu_div, fpu_mul, fpu_op, fpu_sqrt, fpu_sub

__all__ = [
    "CampaignReport", "Classification", "ExperimentConfig", "approximate_mpe", "classify",
    "percentage_error", "run_campaign", "umud_stats", "PackedFloat32", "ReducedFloat",
    "format_hex", "parse_hex", "FaultSite", "FaultSpec", "OpKind", "CheckClass", "CheckVerdict",
    "Status", "SuppressionReason", "check", "check_batch", "FpuFlag", "FpuResult", "fpu_add",
    "fpu_batch", "fpu_div", "fpu_mul", "fpu_op", "fpu_sqrt", "fpu_sub",
]
