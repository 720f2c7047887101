"""Qubit allocation and reuse for modular multi-core quantum processors."""
__version__ = "0.1.0"

from .architecture import Architecture, make_grid, parse_arch  # noqa: E402
from .circuit import Circuit, GateOp, SlicedCircuit, slice_circuit  # noqa: E402
from .env import AllocationInstance, AllocationSolution, build_instance  # noqa: E402
from .policies import PolicyConfig, allocate  # noqa: E402
from .qasm import QasmError, emit_qasm, load_qasm, parse_qasm  # noqa: E402
from .reuse import ReuseWeights, optimize_qubit_reuse  # noqa: E402

__all__ = [
    "Architecture", "make_grid", "parse_arch", "Circuit", "GateOp", "SlicedCircuit", "slice_circuit",
    "AllocationInstance", "AllocationSolution", "build_instance", "PolicyConfig", "allocate",
    "QasmError", "emit_qasm", "load_qasm", "parse_qasm", "ReuseWeights", "optimize_qubit_reuse",
]
