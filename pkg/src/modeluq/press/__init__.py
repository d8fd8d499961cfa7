"""Lumped-parameter press surrogate with competing friction models."""

from .candidates import (MODEL_IDS, Candidate, CoulombFriction, effective_forces,
                         train_candidates)
from .data import (correct_measurements, default_layout, friction_inputs,
                   generate_synthetic_measurements)
from .friction import (MemoryArctan, MemoryState, coulomb_friction, default_units, fit_coulomb,
                       generator_friction, memory_features, memory_friction, memory_update,
                       rate_signs, train_memory_friction)
from .structure import (DEFAULT_CONFIG, DEFAULT_SIGMA, BarElement, BeamElement, JointElement,
                        Node, PressSurrogate, QuasiStaticModel, Sensor, SupportElement,
                        assemble_quasistatic, assembled_beam_matrix, beam_element_matrix,
                        default_surrogate, surrogate_from_dict)
