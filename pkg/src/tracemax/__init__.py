"""Single-packet IP traceback: port-ID assignment, in-packet marking, backward reconstruction."""
from .assignment import (AssignmentError, Conflict, DisconnectedError, IdAssignment, ValidationReport,
                         assign_ids, check_reconstructible, min_bit_width, validate)
from .codec import (CapacityExceeded, CodecProfile, MalformedOption, OptionError, SourceRouteRefused,
                    TraceOption, TruncatedOption, append_id, capacity, decode, encode)
from .marking import MarkingConfig, OnCapacity, Packet, PacketDropped, egress_process, ingress_process, mark
from .reconstruction import (Ambiguous, NoMatch, ReconstructedPath, ReconstructionError, Status,
                             attribute_sources, reconstruct, reconstruct_all)
from .simulator import Scenario, overhead_report, route, run
from .topology import Link, PortRef, Router, Topology, TopologyError

__version__ = "0.1.0"
