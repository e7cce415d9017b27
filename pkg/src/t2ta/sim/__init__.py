from .mc import BIG, SMALL, McConfig, gen_mc_frame
from .motion import LocalTrack, ObjectState, ct_predict, init_track, ukf_step
from .cpm import CommConfig, Cpm, RsuBuffer, cpm_select, rsu_frame, rsu_ingest
from .world import CpStats, intersection_script, load_script, run_cp_scenario, sense

__all__ = [
    "BIG", "SMALL", "McConfig", "gen_mc_frame",
    "LocalTrack", "ObjectState", "ct_predict", "init_track", "ukf_step",
    "CommConfig", "Cpm", "RsuBuffer", "cpm_select", "rsu_frame", "rsu_ingest",
    "CpStats", "intersection_script", "load_script", "run_cp_scenario", "sense",
]
