"""Hot-start Galileo OSNMA authentication engine, scenario signer and TTFAF harness."""

from .engine import (EPHEMERIS_FIX_RULE, AuthEvent, Engine, EventKind, FixRule, NavDataBlock,
                     NavStore, OutOfOrderInput, TimeSyncPolicy, iod_success_rate, link_by_cop,
                     link_by_iod)
from .gst import GstTime
from .harness import SweepResult, metrics, report, sweep
from .inav import InavPage, NavWord, SubFrameBuffer, extract_osnma_field, extract_word, ingest_page, parse_page
from .mack import (MACLT_34, ChainConfig, MackMessage, SlotKind, TagRecord, TagSequence, TeslaKey,
                   assemble_mack, collect_hkroot, merge_key_bits, usable_tags)
from .records import PageRecord, read_jsonl, write_jsonl
from .sbf import ingest_sbf
from .scenario import CopForge, LossModel, SatelliteConfig, ScenarioConfig, preset
from .simulator import GroundTruth, apply_adversary, count_tags, generate, sign_subframe
from .tesla import (AuthResult, KeyChain, compute_tag, load_root_key, verify_key, verify_macseq,
                    verify_tag)

__version__ = "0.1.0"
