"""Event-driven simulator of a RISC-V microcontroller with an embedded FPGA fabric."""

__version__ = "0.1.0"
