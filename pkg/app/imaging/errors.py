"""
Exceptions raised while rendering or augmenting CASS images.
"""


class RenderError(Exception):
    """Invalid rendering input or image data."""
    pass
