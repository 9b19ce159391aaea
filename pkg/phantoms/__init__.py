from phantoms.image import Image, ImagePair
from phantoms.generator import Ellipse, PhantomSpec, render, sample_dataset

__all__ = ["Image", "ImagePair", "Ellipse", "PhantomSpec", "render", "sample_dataset"]
