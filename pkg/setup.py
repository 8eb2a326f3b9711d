from setuptools import setup, find_packages

setup(
   name='parastencil',
   version='1.0',
   description='Parareal with stencil propagators for three-dimensional advection-diffusion, with performance and energy models',
   author='The parastencil developers',
   packages=find_packages(exclude=['examples', 'examples.*']),
   python_requires='>=3.8',
   install_requires=['numba', 'numpy', 'scipy'],
   extras_require={'test': ['pytest']},
   entry_points={'console_scripts': ['parastencil=parastencil.harness:main']},
)
