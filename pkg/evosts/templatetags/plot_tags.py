from django import template

register = template.Library()


@register.filter
def coord(value):
    """Format a pixel coordinate with two decimals."""
    return f"{float(value):.2f}"


@register.filter
def svg_points(points):
    """
    Turn [(x, y), ...] into an SVG ``points`` attribute.

    Usage:
    <polyline points="{{ line.points|svg_points }}"/>
    """
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in points)


@register.filter
def tick_label(value):
    """Short axis label: four significant digits, no trailing noise."""
    value = float(value)
    if value == 0:
        return "0"
    return f"{value:.4g}"


@register.filter
def legend_y(index, top=0):
    """Baseline of the ``index``-th legend entry."""
    return f"{float(top) + 12 + 16 * int(index):.2f}"
