"""Group-covariant quantum state tomography.

Operator frames, pattern kernels, measurement simulation, and density
matrix reconstruction for spin systems, homodyne detection, and
displaced photon counting.
"""

from .linalg import (
    DensityMatrix,
    HermitianEigensystem,
    expm_i_herm,
    fidelity,
    herm_eig,
    hs_inner,
    hs_norm,
    nearest_density,
    pure_state_density,
    random_mixed_density,
    random_pure_density,
    trace_distance,
)
from .frames import (
    DualFrame,
    FrameElement,
    OperatorFrame,
    closure_residual,
    covariance_residual,
    dual_frame,
    estimate_k_tilde,
    gram_schmidt,
    k_tilde_invariance,
    pauli_frame,
    trace_identity_residual,
)
from .io import RecordBatch, read_matrix_json, read_records_csv, write_matrix_json, write_records_csv
from .oscillator import (
    FockSpace,
    coherent_state,
    displacement,
    displacement_frame,
    fock_space,
    fock_state,
    quadrature,
    thermal_state,
)
from .sampling import (
    BLOCK_SIZE,
    RNG_CONTRACT,
    MatrixAccumulator,
    ReconstructionResult,
    bootstrap_fidelity_stderr,
    sample_categorical,
    sample_inverse_cdf,
    sample_sphere,
)
from .spin import (
    Direction,
    SpinFrame,
    SpinSystem,
    random_finite_labels,
    reconstruct_spin_finite,
    reconstruct_spin_mc,
    reconstruct_spin_quadrature,
    rotation,
    rotation_frame,
    sphere_frame,
    spin_operators,
    spin_pattern,
    spin_probability,
)
from .homodyne import (
    HomodyneGrid,
    homodyne_kernel,
    homodyne_pdf,
    kmax_convergence,
    quad_wavefunction,
    reconstruct_homodyne,
)
from .displaced import (
    AlphaGrid,
    bw_frame,
    bw_kernel,
    bw_operator,
    photon_pdf,
    reconstruct_bw,
)
from .validation import NumericalFailure, ValidationError

__version__ = "0.1.0"
