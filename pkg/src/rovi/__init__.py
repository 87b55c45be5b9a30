"""Region-of-visual-interests search: quadtree inverted visual index, baselines and oracle."""

from .baselines import DoubleIndex, SpatialFirstIndex, VisualFirstIndex, di_search, sfi_search, vfi_search
from .geometry import area, geo_sim, intersection_area, union_area, vis_sim
from .model import (
    Dataset,
    GeoImage,
    Mbr,
    RoviError,
    RoviQuery,
    RoviUser,
    UNIT_SPACE,
    VisualVocabulary,
    derive_user,
)
from .indexes import build_index
from .morton import MortonCode, decode, encode
from .oracle import ValidationReport, oracle_search, validate
from .qiv import QivIndex, build_qiv, get_intersect_nodes, get_word_nodes, node_visual_filter, rovi_search
from .workload import WorkloadSpec, generate_dataset, generate_workload

__version__ = "0.1.0"
