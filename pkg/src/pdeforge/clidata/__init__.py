"""Command line, run configuration and on-disk formats."""
from .container import Container, ContainerError, from_bytes, read, to_bytes, write
from .runconfig import RunConfig
from .store import (load_dataset, load_model, load_trajectory, save_dataset, save_model, save_trajectory,
                    write_rows)
