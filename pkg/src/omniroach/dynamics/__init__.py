from .body import Body, BoxShape, box_inertia, ellipsoid_inertia, rod_inertia
from .collision import Contact, detect_collisions
from .joints import FreeDrive, MotorDrive, RevoluteJoint, SpringDrive, joint_torque
from .solver import resolve_contacts
from .world import SimulationDiverged, World

__all__ = [
    "Body",
    "BoxShape",
    "Contact",
    "FreeDrive",
    "MotorDrive",
    "RevoluteJoint",
    "SimulationDiverged",
    "SpringDrive",
    "World",
    "box_inertia",
    "detect_collisions",
    "ellipsoid_inertia",
    "joint_torque",
    "resolve_contacts",
    "rod_inertia",
]
