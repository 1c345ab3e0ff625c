from .render import (
    RenderError,
    main,
    rectangle_corners,
    render_terminal_plot,
    render_timeseries,
)

__all__ = [
    "RenderError",
    "main",
    "rectangle_corners",
    "render_terminal_plot",
    "render_timeseries",
]
