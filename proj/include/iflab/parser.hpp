#pragma once
#include <string>

#include "iflab/expr.hpp"

namespace iflab {

// Grammar (whitespace free-form):
//   expr    := term (('+'|'-') term)*
//   term    := factor (('*'|'/') factor)*
//   factor  := NUMBER | IDENT | 'p(' assigns ')' | 'E[' dataexpr ']'
//            | 'E[' dataexpr '|' assigns ']' | 'sum_IDENT { expr }'
//            | 'log(' expr ')' | '(' expr ')'
//   assigns := IDENT '=' (INT | IDENT) (',' assigns)?
//
// A bare IDENT outside E[...] must be a bound summation variable and
// evaluates to its current level. Inside the data slot of E[...] a bare
// IDENT refers to an observed variable. The right-hand side of an
// assignment is an integer level or a bound variable.
//
// Errors: SyntaxError (with line/column), UnboundVariable,
// RedeclaredBoundVariable.
FunctionalExpr parse_functional(const std::string& text);

}  // namespace iflab
