"""ILI nowcasting from daily user-generated text streams."""

__version__ = "0.1.0"
