#pragma once

// Butcher tableaus for the explicit embedded pairs used by ode.hpp.
//
// Dop853: Dormand-Prince 8(5,3) pair with its 7th-order continuous extension,
//   coefficients from Hairer, Norsett & Wanner, "Solving Ordinary Differential
//   Equations I", 2nd ed. (DOP853.F).
// Dopri5: Dormand-Prince 5(4) pair with Shampine's 4th-order dense output
//   (DOPRI5.F).
//
// Dense output is stored as coefficient vectors r0..r(m-1) evaluated with the
// alternating Horner scheme
//   y(s) = r0 + s*(r1 + s1*(r2 + s*(r3 + s1*(...)))),  s = (t - t_n)/h, s1 = 1 - s.

#include <array>
#include <cmath>

#include <Eigen/Dense>

namespace gramsynth::ode::detail {

using Vec = Eigen::VectorXd;

struct Dop853Tableau {
  static constexpr int kStages = 12;
  static constexpr int kDenseTerms = 8;
  // Exponent of the step controller is 1/(kControllerOrder + 1).
  static constexpr int kControllerOrder = 7;
  static constexpr bool kFsal = false;
  static constexpr const char* kName = "dop853";

  static constexpr std::array<double, kStages> c = {
      0.0,
      0.526001519587677318785587544488e-01,
      0.789002279381515978178381316732e-01,
      0.118350341907227396726757197510e+00,
      0.281649658092772603273242802490e+00,
      0.333333333333333333333333333333e+00,
      0.25e+00,
      0.307692307692307692307692307692e+00,
      0.651282051282051282051282051282e+00,
      0.6e+00,
      0.857142857142857142857142857142e+00,
      1.0};

  static constexpr std::array<std::array<double, kStages>, kStages> a = {{
      {},
      {5.26001519587677318785587544488e-2},
      {1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2},
      {2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2},
      {2.41365134159266685502369798665e-1, 0.0, -8.84549479328286085344864962717e-1,
       9.24834003261792003115737966543e-1},
      {3.7037037037037037037037037037e-2, 0.0, 0.0, 1.70828608729473871279604482173e-1,
       1.25467687566822425016691814123e-1},
      {3.7109375e-2, 0.0, 0.0, 1.70252211019544039314978060272e-1,
       6.02165389804559606850219397283e-2, -1.7578125e-2},
      {3.70920001185047927108779319836e-2, 0.0, 0.0, 1.70383925712239993810214054705e-1,
       1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2,
       8.27378916381402288758473766002e-3},
      {6.24110958716075717114429577812e-1, 0.0, 0.0, -3.36089262944694129406857109825e0,
       -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1,
       2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1},
      {4.77662536438264365890433908527e-1, 0.0, 0.0, -2.48811461997166764192642586468e0,
       -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1,
       1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1,
       -2.03312017085086261358222928593e-2},
      {-9.3714243008598732571704021658e-1, 0.0, 0.0, 5.18637242884406370830023853209e0,
       1.09143734899672957818500254654e0, -8.14978701074692612513997267357e0,
       -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1,
       2.49360555267965238987089396762e0, -3.0467644718982195003823669022e0},
      {2.27331014751653820792359768449e0, 0.0, 0.0, -1.05344954667372501984066689879e1,
       -2.00087205822486249909675718444e0, -1.79589318631187989172765950534e1,
       2.79488845294199600508499808837e1, -2.85899827713502369474065508674e0,
       -8.87285693353062954433549289258e0, 1.23605671757943030647266201528e1,
       6.43392746015763530355970484046e-1},
  }};

  static constexpr std::array<double, kStages> b = {
      5.42937341165687622380535766363e-2, 0.0, 0.0, 0.0, 0.0,
      4.45031289275240888144113950566e0, 1.89151789931450038304281599044e0,
      -5.8012039600105847814672114227e0, 3.1116436695781989440891606237e-1,
      -1.52160949662516078556178806805e-1, 2.01365400804030348374776537501e-1,
      4.47106157277725905176885569043e-2};

  // 5th-order error weights (applied to the stages directly).
  static constexpr std::array<double, kStages> e5 = {
      0.1312004499419488073250102996e-01, 0.0, 0.0, 0.0, 0.0,
      -0.1225156446376204440720569753e+01, -0.4957589496572501915214079952e+00,
      0.1664377182454986536961530415e+01, -0.3503288487499736816886487290e+00,
      0.3341791187130174790297318841e+00, 0.8192320648511571246570742613e-01,
      -0.2235530786388629525884427845e-01};

  // 3rd-order embedded weights on stages 1, 9 and 12.
  static constexpr double bhh1 = 0.244094488188976377952755905512e+00;
  static constexpr double bhh2 = 0.733846688281611857341361741547e+00;
  static constexpr double bhh3 = 0.220588235294117647058823529412e-01;

  // Extra stages for the continuous extension.
  static constexpr double c14 = 0.1e+00;
  static constexpr double c15 = 0.2e+00;
  static constexpr double c16 = 0.777777777777777777777777777778e+00;

  static constexpr double a141 = 5.61675022830479523392909219681e-2;
  static constexpr double a147 = 2.53500210216624811088794765333e-1;
  static constexpr double a148 = -2.46239037470802489917441475441e-1;
  static constexpr double a149 = -1.24191423263816360469010140626e-1;
  static constexpr double a1410 = 1.5329179827876569731206322685e-1;
  static constexpr double a1411 = 8.20105229563468988491666602057e-3;
  static constexpr double a1412 = 7.56789766054569976138603589584e-3;
  static constexpr double a1413 = -8.298e-3;

  static constexpr double a151 = 3.18346481635021405060768473261e-2;
  static constexpr double a156 = 2.83009096723667755288322961402e-2;
  static constexpr double a157 = 5.35419883074385676223797384372e-2;
  static constexpr double a158 = -5.49237485713909884646569340306e-2;
  static constexpr double a1511 = -1.08347328697249322858509316994e-4;
  static constexpr double a1512 = 3.82571090835658412954920192323e-4;
  static constexpr double a1513 = -3.40465008687404560802977114492e-4;
  static constexpr double a1514 = 1.41312443674632500278074618366e-1;

  static constexpr double a161 = -4.28896301583791923408573538692e-1;
  static constexpr double a166 = -4.69762141536116384314449447206e0;
  static constexpr double a167 = 7.68342119606259904184240953878e0;
  static constexpr double a168 = 4.06898981839711007970213554331e0;
  static constexpr double a169 = 3.56727187455281109270669543021e-1;
  static constexpr double a1613 = -1.39902416515901462129418009734e-3;
  static constexpr double a1614 = 2.9475147891527723389556272149e0;
  static constexpr double a1615 = -9.15095847217987001081870187138e0;

  // Dense-output weights; row j gives r(4+j) before the extra stages are
  // folded in. Columns: k1, k6..k12, f(t+h), k14, k15, k16.
  static constexpr std::array<std::array<double, 12>, 4> d = {{
      {-0.84289382761090128651353491142e+01, 0.56671495351937776962531783590e+00,
       -0.30689499459498916912797304727e+01, 0.23846676565120698287728149680e+01,
       0.21170345824450282767155149946e+01, -0.87139158377797299206789907490e+00,
       0.22404374302607882758541771650e+01, 0.63157877876946881815570249290e+00,
       -0.88990336451333310820698117400e-01, 0.18148505520854727256656404962e+02,
       -0.91946323924783554000451984436e+01, -0.44360363875948939664310572000e+01},
      {0.10427508642579134603413151009e+02, 0.24228349177525818288430175319e+03,
       0.16520045171727028198505394887e+03, -0.37454675472269020279518312152e+03,
       -0.22113666853125306036270938578e+02, 0.77334326684722638389603898808e+01,
       -0.30674084731089398182061213626e+02, -0.93321305264302278729567221706e+01,
       0.15697238121770843886131091075e+02, -0.31139403219565177677282850411e+02,
       -0.93529243588444783865713862664e+01, 0.35816841486394083752465898540e+02},
      {0.19985053242002433820987653617e+02, -0.38703730874935176555105901742e+03,
       -0.18917813819516756882830838328e+03, 0.52780815920542364900561016686e+03,
       -0.11573902539959630126141871134e+02, 0.68812326946963000169666922661e+01,
       -0.10006050966910838403183860980e+01, 0.77771377980534432092869265740e+00,
       -0.27782057523535084065932004339e+01, -0.60196695231264120758267380846e+02,
       0.84320405506677161018159903784e+02, 0.11992291136182789328035130030e+02},
      {-0.25693933462703749003312586129e+02, -0.15418974869023643374053993627e+03,
       -0.23152937917604549567536039109e+03, 0.35763911791061412378285349910e+03,
       0.93405324183624310003907691704e+02, -0.37458323136451633156875139351e+02,
       0.10409964950896230045147246184e+03, 0.29840293426660503123344363579e+02,
       -0.43533456590011143754432175058e+02, 0.96324553959188282948394950600e+02,
       -0.39177261675615439165231486172e+02, -0.14972683625798562581422125276e+03},
  }};

  /// Scaled error norm of a trial step (Hairer's combined 5th/3rd-order
  /// estimate). `scale` holds atol + rtol*max(|y_n|, |y_{n+1}|).
  static double error_norm(const std::array<Vec, kStages>& k, const Vec& increment,
                           const Vec& scale, double h) {
    const Eigen::Index n = scale.size();
    double err5 = 0.0;
    double err3 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double e5i = 0.0;
      for (int j = 0; j < kStages; ++j) {
        if (e5[j] != 0.0) e5i += e5[j] * k[j][i];
      }
      const double e3i = increment[i] - bhh1 * k[0][i] - bhh2 * k[8][i] - bhh3 * k[11][i];
      err5 += (e5i / scale[i]) * (e5i / scale[i]);
      err3 += (e3i / scale[i]) * (e3i / scale[i]);
    }
    double deno = err5 + 0.01 * err3;
    if (deno <= 0.0) deno = 1.0;
    return std::abs(h) * err5 * std::sqrt(1.0 / (static_cast<double>(n) * deno));
  }

  /// Builds the 8 dense-output coefficient columns for the accepted step
  /// [t, t+h]. `fnew` is f(t+h, y_new). Needs three extra field evaluations.
  template <class Field>
  static void dense(const Field& f, double t, double h, const Vec& y, const Vec& y_new,
                    const std::array<Vec, kStages>& k, const Vec& fnew, Vec& work,
                    Vec& k14, Vec& k15, Vec& k16, Eigen::MatrixXd& coeff) {
    const Eigen::Index n = y.size();
    coeff.resize(n, kDenseTerms);
    const Vec ydiff = y_new - y;
    const Vec bspl = h * k[0] - ydiff;
    coeff.col(0) = y;
    coeff.col(1) = ydiff;
    coeff.col(2) = bspl;
    coeff.col(3) = ydiff - h * fnew - bspl;

    work = y + h * (a141 * k[0] + a147 * k[6] + a148 * k[7] + a149 * k[8] + a1410 * k[9] +
                    a1411 * k[10] + a1412 * k[11] + a1413 * fnew);
    f(t + c14 * h, work, k14);
    work = y + h * (a151 * k[0] + a156 * k[5] + a157 * k[6] + a158 * k[7] + a1511 * k[10] +
                    a1512 * k[11] + a1513 * fnew + a1514 * k14);
    f(t + c15 * h, work, k15);
    work = y + h * (a161 * k[0] + a166 * k[5] + a167 * k[6] + a168 * k[7] + a169 * k[8] +
                    a1613 * fnew + a1614 * k14 + a1615 * k15);
    f(t + c16 * h, work, k16);

    for (int row = 0; row < 4; ++row) {
      const auto& w = d[row];
      coeff.col(4 + row) =
          h * (w[0] * k[0] + w[1] * k[5] + w[2] * k[6] + w[3] * k[7] + w[4] * k[8] +
               w[5] * k[9] + w[6] * k[10] + w[7] * k[11] + w[8] * fnew + w[9] * k14 +
               w[10] * k15 + w[11] * k16);
    }
  }
};

struct Dopri5Tableau {
  static constexpr int kStages = 7;
  static constexpr int kDenseTerms = 5;
  static constexpr int kControllerOrder = 4;
  static constexpr bool kFsal = true;
  static constexpr const char* kName = "dopri5";

  static constexpr std::array<double, kStages> c = {0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0};

  static constexpr std::array<std::array<double, kStages>, kStages> a = {{
      {},
      {0.2},
      {3.0 / 40.0, 9.0 / 40.0},
      {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
      {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
      {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
      {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
  }};

  static constexpr std::array<double, kStages> b = {
      35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0};

  static constexpr std::array<double, kStages> e = {
      71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0,
      22.0 / 525.0,   -1.0 / 40.0};

  static constexpr std::array<double, kStages> dd = {
      -12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
      -10690763975.0 / 1880347072.0,  701980252875.0 / 199316789632.0,
      -1453857185.0 / 822651844.0,    69997945.0 / 29380423.0};

  static double error_norm(const std::array<Vec, kStages>& k, const Vec& /*increment*/,
                           const Vec& scale, double h) {
    const Eigen::Index n = scale.size();
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double ei = 0.0;
      for (int j = 0; j < kStages; ++j) {
        if (e[j] != 0.0) ei += e[j] * k[j][i];
      }
      ei *= h;
      err += (ei / scale[i]) * (ei / scale[i]);
    }
    return std::sqrt(err / static_cast<double>(n));
  }

  template <class Field>
  static void dense(const Field& /*f*/, double /*t*/, double h, const Vec& y, const Vec& y_new,
                    const std::array<Vec, kStages>& k, const Vec& fnew, Vec& /*work*/,
                    Vec& /*k14*/, Vec& /*k15*/, Vec& /*k16*/, Eigen::MatrixXd& coeff) {
    const Eigen::Index n = y.size();
    coeff.resize(n, kDenseTerms);
    const Vec ydiff = y_new - y;
    const Vec bspl = h * k[0] - ydiff;
    coeff.col(0) = y;
    coeff.col(1) = ydiff;
    coeff.col(2) = bspl;
    coeff.col(3) = ydiff - h * fnew - bspl;
    Vec acc = Vec::Zero(n);
    for (int j = 0; j < kStages; ++j) {
      if (dd[j] != 0.0) acc += dd[j] * k[j];
    }
    coeff.col(4) = h * acc;
  }
};

}  // namespace gramsynth::ode::detail
