"""Heap IR: types, instructions, parser, printer and CFG indexes."""

from .indexes import CFG, ExecCounts, FunctionIndex, ProgramIndex, build_cfg, build_indexes
from .ir import (
    AllocationSite, AllocInit, Block, Const, Function, GlobalDecl, GlobalRef, HirProgram,
    Instr, Null, Param, Var, VType, site_id_for,
)
from .parser import Diagnostic, HirError, parse_program
from .printer import format_program
from .types import (
    AllocatedType, ArrayType, FieldDesc, NamedType, PrimType, Typedef, TypeTable,
    flatten_layout,
)

__all__ = [
    "CFG", "ExecCounts", "FunctionIndex", "ProgramIndex", "build_cfg", "build_indexes",
    "AllocationSite", "AllocInit", "Block", "Const", "Function", "GlobalDecl", "GlobalRef",
    "HirProgram", "Instr", "Null", "Param", "Var", "VType", "site_id_for",
    "Diagnostic", "HirError", "parse_program", "format_program",
    "AllocatedType", "ArrayType", "FieldDesc", "NamedType", "PrimType", "Typedef",
    "TypeTable", "flatten_layout",
]
