export {
  _lt as lt,
  _lte as lte,
  _gt as gt,
  _gte as gte,
  _positive as positive,
  _negative as negative,
  _nonpositive as nonpositive,
  _nonnegative as nonnegative,
  _multipleOf as multipleOf,
  _maxSize as maxSize,
  _minSize as minSize,
  _size as size,
  _maxLength as maxLength,
  _minLength as minLength,
  _length as length,
  _regex as regex,
  _lowercase as lowercase,
  _uppercase as uppercase,
  _includes as includes,
  _startsWith as startsWith,
  _endsWith as endsWith,
  _property as property,
  _mime as mime,
  _overwrite as overwrite,
  _normalize as normalize,
  _trim as trim,
  _toLowerCase as toLowerCase,
  _toUpperCase as toUpperCase,
  _slugify as slugify,
  type $RefinementCtx as RefinementCtx,
} from "../core/index.js";
