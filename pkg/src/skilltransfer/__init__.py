"""One-shot transfer of demonstrated robot skills between similar objects.

Interactions are encoded as scalar functions on triangle meshes, carried to
a new object with functional maps, and replayed as end-effector paths built
from dual-quaternion screw motions.
"""

from .dualquat import UnitDualQuaternion, sclerp
from .errors import (InputError, NoFeasibleGrasp, NumericalError, SkillTransferError, StageError)
from .fmap import FunctionalMap, PointToPointMap, SurfaceFunction
from .mesh import SpectralBasis, TriangleMesh, load_mesh, spectral_basis
from .pipeline import (DemonstrationBundle, EvaluationReport, PipelineConfig, Scene, evaluate_transfer, imitate,
                       record_bundle, transfer_skill)

__version__ = "0.1.0"
