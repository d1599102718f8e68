from .cli import create_parser, main
from .runner import LabRunner, two_phase_field, write_batch_csv, write_excess_csv
from .schemas import (
    BatchManifest,
    BatchSummary,
    Command,
    FieldSource,
    GridConfig,
    RunConfig,
    RunParameters,
    RunRecord,
)
