"""Drawing-to-3D character toolkit: mesh refinement against a front-view
drawing, contour inpainting, color baking, rigging, animation and guidance
rendering."""

__version__ = "0.1.0"
