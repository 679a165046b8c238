"""synthima: image synthesis by pixel compositing and by deep-feature optimization.

Submodules:
    tensor     float32 tensors and conv/relu/pool primitives with backward passes
    image_io   PNG/PPM loading, bilinear resize, network preprocessing
    composite  classical filters, blending, pencil sketch, cellular automata, patterns
    network    VGG16-shaped feature network: forward with capture, backward to input
    vggw       portable binary weight-file codec
    style      Gram/content losses and the iterative synthesis loop
    cli        batch command-line front door
"""

__version__ = "0.1.0"
